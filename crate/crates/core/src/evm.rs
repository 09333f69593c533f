//! A small EVM interpreter for a handful of opcodes.
//!
//! [`step`] is a pure state transition. Gas is charged before an
//! instruction executes, according to a [`GasSchedule`]; the default charges
//! one unit per instruction plus one per 32-byte word of memory growth.
//! `ADD` wraps modulo 2^256, unlike the checked contract arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::u256::U256;

pub const STACK_LIMIT: usize = 1024;

/// Increments storage slot 0, reverting when the increment would wrap.
///
/// ```text
/// 0x00 PUSH1 0x00   0x02 SLOAD   0x03 PUSH1 0x01   0x05 ADD   0x06 DUP1
/// 0x07 PUSH1 0x0f   0x09 JUMPI
/// 0x0a PUSH1 0x00   0x0c PUSH1 0x00   0x0e REVERT
/// 0x0f JUMPDEST     0x10 PUSH1 0x00   0x12 SSTORE   0x13 STOP
/// ```
pub const INC_CONTRACT: [u8; 20] = [
    0x60, 0x00, 0x54, 0x60, 0x01, 0x01, 0x80, 0x60, 0x0f, 0x57, 0x60, 0x00, 0x60, 0x00, 0xfd, 0x5b, 0x60, 0x00,
    0x55, 0x00,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Stop,
    Add,
    IsZero,
    Pop,
    MLoad,
    MStore,
    SLoad,
    SStore,
    Jump,
    JumpI,
    JumpDest,
    Push1,
    Dup1,
    Revert,
}

impl Opcode {
    pub const ALL: [Opcode; 14] = [
        Opcode::Stop,
        Opcode::Add,
        Opcode::IsZero,
        Opcode::Pop,
        Opcode::MLoad,
        Opcode::MStore,
        Opcode::SLoad,
        Opcode::SStore,
        Opcode::Jump,
        Opcode::JumpI,
        Opcode::JumpDest,
        Opcode::Push1,
        Opcode::Dup1,
        Opcode::Revert,
    ];

    pub fn byte(self) -> u8 {
        match self {
            Opcode::Stop => 0x00,
            Opcode::Add => 0x01,
            Opcode::IsZero => 0x15,
            Opcode::Pop => 0x50,
            Opcode::MLoad => 0x51,
            Opcode::MStore => 0x52,
            Opcode::SLoad => 0x54,
            Opcode::SStore => 0x55,
            Opcode::Jump => 0x56,
            Opcode::JumpI => 0x57,
            Opcode::JumpDest => 0x5b,
            Opcode::Push1 => 0x60,
            Opcode::Dup1 => 0x80,
            Opcode::Revert => 0xfd,
        }
    }

    pub fn from_byte(b: u8) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.byte() == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Stop => "STOP",
            Opcode::Add => "ADD",
            Opcode::IsZero => "ISZERO",
            Opcode::Pop => "POP",
            Opcode::MLoad => "MLOAD",
            Opcode::MStore => "MSTORE",
            Opcode::SLoad => "SLOAD",
            Opcode::SStore => "SSTORE",
            Opcode::Jump => "JUMP",
            Opcode::JumpI => "JUMPI",
            Opcode::JumpDest => "JUMPDEST",
            Opcode::Push1 => "PUSH1",
            Opcode::Dup1 => "DUP1",
            Opcode::Revert => "REVERT",
        }
    }

    fn pops(self) -> usize {
        match self {
            Opcode::Stop | Opcode::JumpDest | Opcode::Push1 => 0,
            Opcode::IsZero | Opcode::Pop | Opcode::MLoad | Opcode::SLoad | Opcode::Jump | Opcode::Dup1 => 1,
            Opcode::Add | Opcode::MStore | Opcode::SStore | Opcode::JumpI | Opcode::Revert => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvmError {
    StackUnderflow,
    StackOverflow,
    OutOfGas,
    InvalidJump,
    InvalidOpcode,
}

impl fmt::Display for EvmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvmError::StackUnderflow => "STACK_UNDERFLOW",
            EvmError::StackOverflow => "STACK_OVERFLOW",
            EvmError::OutOfGas => "OUT_OF_GAS",
            EvmError::InvalidJump => "INVALID_JUMP",
            EvmError::InvalidOpcode => "INVALID_OPCODE",
        })
    }
}

/// Cost table: a per-opcode base cost plus a charge per word of memory growth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    pub base: BTreeMap<Opcode, u64>,
    pub memory_word: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule { base: Opcode::ALL.into_iter().map(|op| (op, 1)).collect(), memory_word: 1 }
    }
}

/// Code together with its valid jump destinations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Code {
    bytes: Vec<u8>,
    jumpdests: BTreeSet<usize>,
}

impl Code {
    pub fn new(bytes: Vec<u8>) -> Self {
        let mut jumpdests = BTreeSet::new();
        let mut pc = 0;
        while pc < bytes.len() {
            match Opcode::from_byte(bytes[pc]) {
                Some(Opcode::JumpDest) => {
                    jumpdests.insert(pc);
                    pc += 1;
                }
                Some(Opcode::Push1) => pc += 2,
                _ => pc += 1,
            }
        }
        Code { bytes, jumpdests }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn jumpdests(&self) -> &BTreeSet<usize> {
        &self.jumpdests
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Machine {
    pub gas: u64,
    pub pc: usize,
    pub stack: Vec<U256>,
    pub memory: Vec<u8>,
    pub storage: BTreeMap<U256, U256>,
    pub code: Arc<Code>,
}

impl Machine {
    pub fn load(&self, key: U256) -> U256 {
        self.storage.get(&key).copied().unwrap_or_default()
    }

    /// Stack element `i` from the top.
    pub fn peek(&self, i: usize) -> Option<U256> {
        self.stack.len().checked_sub(i + 1).map(|j| self.stack[j])
    }

    fn pop(&mut self) -> U256 {
        self.stack.pop().expect("arity checked before execution")
    }

    pub fn opcode(&self) -> Option<Result<Opcode, u8>> {
        self.code.bytes.get(self.pc).map(|&b| Opcode::from_byte(b).ok_or(b))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum State {
    Ok(Machine),
    Reverts { gas: u64, data: Vec<u8> },
    /// Normal halt. Storage is kept so callers can inspect the committed writes.
    Returns { gas: u64, data: Vec<u8>, storage: BTreeMap<U256, U256> },
    Invalid(EvmError),
}

impl State {
    pub fn is_ok(&self) -> bool {
        matches!(self, State::Ok(_))
    }

    pub fn machine(&self) -> Option<&Machine> {
        match self {
            State::Ok(m) => Some(m),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            State::Ok(m) => format!("OK(pc=0x{:x}, gas={}, stack={})", m.pc, m.gas, m.stack.len()),
            State::Reverts { gas, data } => format!("REVERTS(gas={gas}, data={} bytes)", data.len()),
            State::Returns { gas, data, .. } => format!("RETURNS(gas={gas}, data={} bytes)", data.len()),
            State::Invalid(e) => format!("INVALID({e})"),
        }
    }
}

pub fn init(code: Vec<u8>, gas: u64, storage: BTreeMap<U256, U256>) -> State {
    State::Ok(Machine { gas, pc: 0, stack: Vec::new(), memory: Vec::new(), storage, code: Arc::new(Code::new(code)) })
}

/// Memory after making `[addr, addr + n)` addressable: unchanged when it
/// already is, otherwise zero-extended to the next multiple of 32.
pub fn expand(memory: &[u8], addr: usize, n: usize) -> Vec<u8> {
    let mut out = memory.to_vec();
    let end = addr + n;
    if end > out.len() {
        out.resize(end.div_ceil(32) * 32, 0);
    }
    out
}

/// Words of memory growth needed to touch `[addr, addr + n)`; `None` when
/// the range is too large to ever be paid for.
fn growth_words(current: usize, addr: U256, n: u64) -> Option<u64> {
    if n == 0 {
        return Some(0);
    }
    let end = addr.to_u64()?.checked_add(n)?;
    let words = end.div_ceil(32);
    Some(words.saturating_sub((current / 32) as u64))
}

/// Cost of executing `op` in `m`. Memory operands are read from the stack,
/// so a short stack is reported as underflow.
pub fn gas_cost(op: Opcode, m: &Machine, schedule: &GasSchedule) -> Result<u64, EvmError> {
    let base = schedule.base.get(&op).copied().unwrap_or(1);
    let words = match op {
        Opcode::MLoad | Opcode::MStore => {
            let addr = m.peek(0).ok_or(EvmError::StackUnderflow)?;
            growth_words(m.memory.len(), addr, 32)
        }
        Opcode::Revert => {
            let addr = m.peek(0).ok_or(EvmError::StackUnderflow)?;
            let len = m.peek(1).ok_or(EvmError::StackUnderflow)?;
            match len.to_u64() {
                Some(len) => growth_words(m.memory.len(), addr, len),
                None => None,
            }
        }
        _ => Some(0),
    };
    let words = words.ok_or(EvmError::OutOfGas)?;
    words
        .checked_mul(schedule.memory_word)
        .and_then(|c| c.checked_add(base))
        .ok_or(EvmError::OutOfGas)
}

pub fn step(st: &State) -> State {
    step_with(st, &GasSchedule::default())
}

pub fn step_with(st: &State, schedule: &GasSchedule) -> State {
    let State::Ok(m) = st else {
        return st.clone();
    };
    let op = match m.opcode() {
        None => return State::Returns { gas: m.gas, data: Vec::new(), storage: m.storage.clone() },
        Some(Err(_)) => return State::Invalid(EvmError::InvalidOpcode),
        Some(Ok(op)) => op,
    };
    let base = schedule.base.get(&op).copied().unwrap_or(1);
    if m.gas < base {
        return State::Invalid(EvmError::OutOfGas);
    }
    if m.stack.len() < op.pops() {
        return State::Invalid(EvmError::StackUnderflow);
    }
    let cost = match gas_cost(op, m, schedule) {
        Ok(c) if c <= m.gas => c,
        Ok(_) => return State::Invalid(EvmError::OutOfGas),
        Err(e) => return State::Invalid(e),
    };
    let mut m = m.clone();
    m.gas -= cost;
    match execute(&mut m, op) {
        Ok(None) => State::Ok(m),
        Ok(Some(done)) => done,
        Err(e) => State::Invalid(e),
    }
}

fn push(m: &mut Machine, v: U256) -> Result<(), EvmError> {
    if m.stack.len() >= STACK_LIMIT {
        return Err(EvmError::StackOverflow);
    }
    m.stack.push(v);
    Ok(())
}

fn jump_target(m: &Machine, dest: U256) -> Result<usize, EvmError> {
    match dest.to_u64() {
        Some(d) if m.code.jumpdests.contains(&(d as usize)) => Ok(d as usize),
        _ => Err(EvmError::InvalidJump),
    }
}

/// Executes `op` after gas has been charged. `Ok(Some(_))` is a halt.
fn execute(m: &mut Machine, op: Opcode) -> Result<Option<State>, EvmError> {
    match op {
        Opcode::Stop => return Ok(Some(State::Returns { gas: m.gas, data: Vec::new(), storage: m.storage.clone() })),
        Opcode::Add => {
            let a = m.pop();
            let b = m.pop();
            push(m, a.wrapping_add(b))?;
        }
        Opcode::IsZero => {
            let a = m.pop();
            push(m, if a.is_zero() { U256::ONE } else { U256::ZERO })?;
        }
        Opcode::Pop => {
            m.pop();
        }
        Opcode::MLoad => {
            let loc = m.pop().to_u64().expect("charged") as usize;
            m.memory = expand(&m.memory, loc, 32);
            let word: [u8; 32] = m.memory[loc..loc + 32].try_into().unwrap();
            push(m, U256::from_be_bytes(word))?;
        }
        Opcode::MStore => {
            let loc = m.pop().to_u64().expect("charged") as usize;
            let v = m.pop();
            m.memory = expand(&m.memory, loc, 32);
            m.memory[loc..loc + 32].copy_from_slice(&v.to_be_bytes());
        }
        Opcode::SLoad => {
            let k = m.pop();
            let v = m.load(k);
            push(m, v)?;
        }
        Opcode::SStore => {
            let k = m.pop();
            let v = m.pop();
            m.storage.insert(k, v);
        }
        Opcode::Jump => {
            let dest = m.pop();
            m.pc = jump_target(m, dest)?;
            return Ok(None);
        }
        Opcode::JumpI => {
            let dest = m.pop();
            let cond = m.pop();
            if !cond.is_zero() {
                m.pc = jump_target(m, dest)?;
                return Ok(None);
            }
        }
        Opcode::JumpDest => {}
        Opcode::Push1 => {
            let v = m.code.bytes.get(m.pc + 1).copied().unwrap_or(0);
            push(m, U256::from(u64::from(v)))?;
            m.pc = (m.pc + 2).min(m.code.len());
            return Ok(None);
        }
        Opcode::Dup1 => {
            let v = m.peek(0).expect("arity checked");
            push(m, v)?;
        }
        Opcode::Revert => {
            let offset = m.pop();
            let len = m.pop().to_u64().expect("charged") as usize;
            let data = if len == 0 {
                Vec::new()
            } else {
                let off = offset.to_u64().expect("charged") as usize;
                m.memory = expand(&m.memory, off, len);
                m.memory[off..off + len].to_vec()
            };
            return Ok(Some(State::Reverts { gas: m.gas, data }));
        }
    }
    m.pc += 1;
    Ok(None)
}

/// `n` steps, stopping early at the first halted state.
pub fn execute_n(st: &State, n: u64) -> State {
    let mut st = st.clone();
    for _ in 0..n {
        if !st.is_ok() {
            break;
        }
        st = step(&st);
    }
    st
}

/// One line per executed step: pc, opcode, gas before the step, stack depth.
pub fn trace_line(m: &Machine) -> String {
    let name = match m.opcode() {
        None => "(end)".to_string(),
        Some(Ok(op)) => op.name().to_string(),
        Some(Err(b)) => format!("0x{b:02x}?"),
    };
    format!("pc=0x{:04x} {:<8} gas={} stack={}", m.pc, name, m.gas, m.stack.len())
}

/// Like [`execute_n`], also returning the step trace.
pub fn execute_traced(st: &State, n: u64) -> (State, Vec<String>) {
    let mut st = st.clone();
    let mut lines = Vec::new();
    for _ in 0..n {
        let State::Ok(m) = &st else { break };
        lines.push(trace_line(m));
        st = step(&st);
    }
    (st, lines)
}

pub fn parse_hex(s: &str) -> Result<Vec<u8>, String> {
    let s = s.trim();
    let s = s.strip_prefix("0x").unwrap_or(s);
    let s: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
    if !s.len().is_multiple_of(2) {
        return Err("hex code must have an even number of digits".to_string());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| format!("invalid hex byte `{}`", &s[i..i + 2])))
        .collect()
}

/// Result of running the increment contract on one initial value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncRun {
    /// pc right after the conditional jump (7 steps).
    pub branch_pc: usize,
    pub fin: State,
}

pub fn run_inc(initial: U256, gas: u64) -> IncRun {
    let st = init(INC_CONTRACT.to_vec(), gas, BTreeMap::from([(U256::ZERO, initial)]));
    let mid = execute_n(&st, 7);
    let branch_pc = mid.machine().map(|m| m.pc).unwrap_or(usize::MAX);
    IncRun { branch_pc, fin: execute_n(&mid, 4) }
}

/// Initial slot values for the increment check: the boundary set plus
/// `random` seeded random words.
pub fn inc_inputs(random: usize, seed: u64) -> Vec<U256> {
    let mut out = vec![U256::ZERO, U256::ONE, U256::from(5), U256::MAX.overflowing_sub(U256::ONE).0, U256::MAX];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..random).map(|_| U256::from_limbs(rng.random())));
    out
}

/// Checks the increment contract's specification for one initial value.
pub fn check_inc(initial: U256) -> Result<(), String> {
    let run = run_inc(initial, 40_000);
    let fits = initial < U256::MAX;
    match (&run.fin, fits) {
        (State::Returns { storage, .. }, true) => {
            if run.branch_pc != 0xf {
                return Err(format!("{initial}: returned without passing the JUMPDEST at 0xf"));
            }
            let expected = initial.checked_add(U256::ONE).expect("fits");
            match storage.get(&U256::ZERO) {
                Some(v) if *v == expected => Ok(()),
                other => Err(format!("{initial}: slot 0 is {other:?}, expected {expected}")),
            }
        }
        (State::Reverts { .. }, false) => {
            if run.branch_pc != 0xa {
                return Err(format!("{initial}: reverted off the 0xa path"));
            }
            Ok(())
        }
        (other, _) => Err(format!("{initial}: ended in {}", other.label())),
    }
}
