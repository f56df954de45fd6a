//! Port classification and seeded random (or exhaustive) input vectors.
//!
//! Each data column draws from its own xoshiro256** stream. The stream for
//! port `p` under run seed `s` is seeded through splitmix64 with
//! `s ^ fnv1a64(p)`, so a column depends only on the seed and the port name,
//! never on declaration order. A `w`-bit value is the top `w` bits of one
//! 64-bit draw.

use std::collections::BTreeMap;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{always_role, AlwaysRole, Edge, Item, ModuleAst};
use crate::SignalId;

pub const CLOCK_NAMES: &[&str] = &["clk", "clock", "i_clk", "clk_i"];
pub const RESET_NAMES: &[&str] = &["rst", "reset", "rst_n", "resetn", "nrst", "areset", "aresetn", "i_rst"];
const ACTIVE_LOW_RESETS: &[&str] = &["rst_n", "resetn", "nrst", "aresetn"];

/// Cycles for which the reset input is held asserted.
pub const RESET_CYCLES: usize = 2;
/// Exhaustive mode is refused above this many data input bits.
pub const MAX_EXHAUSTIVE_BITS: u32 = 20;

pub fn is_clock_name(name: &str) -> bool {
    CLOCK_NAMES.contains(&name.to_ascii_lowercase().as_str())
}

pub fn is_reset_name(name: &str) -> bool {
    RESET_NAMES.contains(&name.to_ascii_lowercase().as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortRole {
    Clock,
    Reset,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetPolarity {
    ActiveHigh,
    ActiveLow,
}

impl ResetPolarity {
    pub fn active_value(self) -> u64 {
        match self {
            ResetPolarity::ActiveHigh => 1,
            ResetPolarity::ActiveLow => 0,
        }
    }

    pub fn inactive_value(self) -> u64 {
        1 - self.active_value()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortClass {
    pub signal: SignalId,
    pub role: PortRole,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_polarity: Option<ResetPolarity>,
}

#[derive(Debug, Error)]
pub enum StimulusError {
    #[error("exhaustive stimuli need {bits} input bits (limit {MAX_EXHAUSTIVE_BITS})")]
    TooManyInputBits { bits: u32 },
    #[error("vector count must be at least 1")]
    EmptyRun,
    #[error("malformed stimulus file: {0}")]
    Format(String),
}

/// Input vectors for one run. The clock has no column: one clock period
/// elapses after every vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusSet {
    pub seed: u64,
    pub n: usize,
    pub columns: BTreeMap<SignalId, Vec<u64>>,
    pub classes: Vec<PortClass>,
}

impl StimulusSet {
    pub fn clock(&self) -> Option<&PortClass> {
        self.classes.iter().find(|c| c.role == PortRole::Clock)
    }

    pub fn reset(&self) -> Option<&PortClass> {
        self.classes.iter().find(|c| c.role == PortRole::Reset)
    }

    pub fn column(&self, name: &str) -> Option<&[u64]> {
        self.columns.get(&SignalId::from(name)).map(Vec::as_slice)
    }
}

/// Clocks and async resets named by edge-triggered always blocks.
fn structural_roles(ast: &ModuleAst) -> (Vec<String>, Vec<(String, Edge)>) {
    let mut clocks = Vec::new();
    let mut resets = Vec::new();
    for item in &ast.items {
        if let Item::Always(ab) = item {
            if let Ok(AlwaysRole::Clocked { clock, reset, .. }) = always_role(ab) {
                if !clocks.contains(&clock) {
                    clocks.push(clock);
                }
                if let Some(r) = reset {
                    if !resets.iter().any(|(n, _)| *n == r.signal) {
                        resets.push((r.signal, r.edge));
                    }
                }
            }
        }
    }
    (clocks, resets)
}

/// Classify every input port as clock, reset or data.
///
/// The clock is the signal driving edge-triggered blocks when there is one,
/// otherwise the first input with a conventional clock name. A signal the
/// blocks use as an asynchronous reset is the reset (polarity from its edge);
/// otherwise the first input with a conventional reset name is (polarity
/// from the name).
pub fn classify_ports(ast: &ModuleAst) -> Vec<PortClass> {
    let (clocks, resets) = structural_roles(ast);
    let inputs: Vec<_> = ast.inputs().collect();
    let clock = inputs
        .iter()
        .find(|p| p.width == 1 && clocks.contains(&p.name))
        .or_else(|| {
            inputs
                .iter()
                .find(|p| is_clock_name(&p.name) && !resets.iter().any(|(n, _)| *n == p.name))
        })
        .map(|p| p.name.clone());
    let structural_reset = inputs
        .iter()
        .filter(|p| Some(&p.name) != clock.as_ref())
        .find_map(|p| resets.iter().find(|(n, _)| *n == p.name).cloned());
    let reset = match structural_reset {
        Some((name, edge)) => Some((
            name,
            match edge {
                Edge::Pos => ResetPolarity::ActiveHigh,
                Edge::Neg => ResetPolarity::ActiveLow,
            },
        )),
        None => inputs
            .iter()
            .filter(|p| Some(&p.name) != clock.as_ref())
            .find(|p| is_reset_name(&p.name))
            .map(|p| {
                let pol = if ACTIVE_LOW_RESETS.contains(&p.name.to_ascii_lowercase().as_str()) {
                    ResetPolarity::ActiveLow
                } else {
                    ResetPolarity::ActiveHigh
                };
                (p.name.clone(), pol)
            }),
    };
    inputs
        .iter()
        .map(|p| {
            let (role, reset_polarity) = if Some(&p.name) == clock.as_ref() {
                (PortRole::Clock, None)
            } else if let Some((_, pol)) = reset.as_ref().filter(|(n, _)| *n == p.name) {
                (PortRole::Reset, Some(*pol))
            } else {
                (PortRole::Data, None)
            };
            PortClass {
                signal: SignalId::from(p.name.as_str()),
                role,
                width: p.width,
                reset_polarity,
            }
        })
        .collect()
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The PRNG stream feeding one data column.
pub fn column_rng(seed: u64, port: &str) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed ^ fnv1a64(port.as_bytes()))
}

fn draw(rng: &mut Xoshiro256StarStar, width: u32) -> u64 {
    let v = rng.next_u64();
    if width >= 64 {
        v
    } else {
        v >> (64 - width)
    }
}

fn reset_column(pol: ResetPolarity, n: usize) -> Vec<u64> {
    (0..n)
        .map(|i| if i < RESET_CYCLES { pol.active_value() } else { pol.inactive_value() })
        .collect()
}

/// `n` pseudo-random vectors, reproducible from `(classes, n, seed)`.
pub fn generate(classes: &[PortClass], n: usize, seed: u64) -> Result<StimulusSet, StimulusError> {
    if n == 0 {
        return Err(StimulusError::EmptyRun);
    }
    let mut columns = BTreeMap::new();
    for c in classes {
        match c.role {
            PortRole::Clock => {}
            PortRole::Reset => {
                columns.insert(
                    c.signal.clone(),
                    reset_column(c.reset_polarity.unwrap_or(ResetPolarity::ActiveHigh), n),
                );
            }
            PortRole::Data => {
                let mut rng = column_rng(seed, c.signal.as_str());
                columns.insert(c.signal.clone(), (0..n).map(|_| draw(&mut rng, c.width)).collect());
            }
        }
    }
    Ok(StimulusSet {
        seed,
        n,
        columns,
        classes: classes.to_vec(),
    })
}

/// Every combination of data input values, one per vector. Data ports are
/// packed in name order, the first name taking the low bits.
pub fn exhaustive(classes: &[PortClass]) -> Result<StimulusSet, StimulusError> {
    let mut data: Vec<&PortClass> = classes.iter().filter(|c| c.role == PortRole::Data).collect();
    data.sort_by(|a, b| a.signal.cmp(&b.signal));
    let bits: u32 = data.iter().map(|c| c.width).sum();
    if bits > MAX_EXHAUSTIVE_BITS {
        return Err(StimulusError::TooManyInputBits { bits });
    }
    let n = 1usize << bits;
    let mut columns = BTreeMap::new();
    let mut shift = 0;
    for c in &data {
        let m = (1u64 << c.width) - 1;
        columns.insert(c.signal.clone(), (0..n as u64).map(|i| (i >> shift) & m).collect());
        shift += c.width;
    }
    for c in classes.iter().filter(|c| c.role == PortRole::Reset) {
        columns.insert(
            c.signal.clone(),
            reset_column(c.reset_polarity.unwrap_or(ResetPolarity::ActiveHigh), n),
        );
    }
    Ok(StimulusSet {
        seed: 0,
        n,
        columns,
        classes: classes.to_vec(),
    })
}

#[derive(Serialize, Deserialize)]
struct StimulusFile {
    seed: u64,
    n: usize,
    columns: BTreeMap<String, Vec<String>>,
    classes: Vec<PortClass>,
}

impl StimulusSet {
    pub fn to_json(&self) -> String {
        let file = StimulusFile {
            seed: self.seed,
            n: self.n,
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.0.clone(), v.iter().map(u64::to_string).collect()))
                .collect(),
            classes: self.classes.clone(),
        };
        serde_json::to_string(&file).expect("stimulus serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, StimulusError> {
        let file: StimulusFile = serde_json::from_str(text).map_err(|e| StimulusError::Format(e.to_string()))?;
        let mut columns = BTreeMap::new();
        for (name, values) in file.columns {
            let parsed = values
                .iter()
                .map(|v| v.parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| StimulusError::Format(format!("column {name}: {e}")))?;
            if parsed.len() != file.n {
                return Err(StimulusError::Format(format!(
                    "column {name} has {} values, expected {}",
                    parsed.len(),
                    file.n
                )));
            }
            columns.insert(SignalId(name), parsed);
        }
        Ok(StimulusSet {
            seed: file.seed,
            n: file.n,
            columns,
            classes: file.classes,
        })
    }
}
