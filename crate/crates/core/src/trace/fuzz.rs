//! Seeded trace generator.
//!
//! Emits a program that allocates `n_objects` objects and, after each
//! allocation, a few operations drawn from an [`OpMix`]. The first
//! operations cycle through every enabled category so short programs still
//! exercise all of them.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::heap::Placement;

use super::parse::{Statement, TraceProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeDist {
    /// Inclusive on both ends.
    Uniform { lo: u64, hi: u64 },
    Fixed { size: u64 },
}

impl SizeDist {
    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        match *self {
            SizeDist::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            SizeDist::Fixed { size } => size,
        }
    }
}

impl fmt::Display for SizeDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeDist::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            SizeDist::Fixed { size } => write!(f, "fixed:{size}"),
        }
    }
}

impl FromStr for SizeDist {
    type Err = String;

    /// `uniform:LO:HI` or `fixed:N`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            super::parse::parse_int(t).ok_or_else(|| format!("bad size `{t}` in `{s}`"))
        };
        let dist = match parts.as_slice() {
            ["uniform", lo, hi] => SizeDist::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            },
            ["fixed", n] => SizeDist::Fixed { size: num(n)? },
            _ => return Err(format!("unknown size distribution `{s}`")),
        };
        match dist {
            SizeDist::Uniform { lo, hi } if lo == 0 || lo > hi => Err(format!("empty size range in `{s}`")),
            SizeDist::Fixed { size: 0 } => Err("sizes must be at least 1".into()),
            d => Ok(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    InBounds,
    OutOfBounds,
    OutAndBack,
    OnePastEnd,
    Free,
    UseAfterFree,
    Cast,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::InBounds,
        OpKind::OutOfBounds,
        OpKind::OutAndBack,
        OpKind::OnePastEnd,
        OpKind::Free,
        OpKind::UseAfterFree,
        OpKind::Cast,
    ];

    pub fn token(self) -> &'static str {
        match self {
            OpKind::InBounds => "in",
            OpKind::OutOfBounds => "oob",
            OpKind::OutAndBack => "out-and-back",
            OpKind::OnePastEnd => "one-past-end",
            OpKind::Free => "free",
            OpKind::UseAfterFree => "uaf",
            OpKind::Cast => "cast",
        }
    }
}

/// Relative weights per operation category, indexed like [`OpKind::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpMix {
    pub weights: [u32; 7],
}

impl Default for OpMix {
    fn default() -> Self {
        Self {
            weights: [6, 2, 1, 1, 2, 1, 2],
        }
    }
}

impl OpMix {
    pub fn weight(&self, kind: OpKind) -> u32 {
        self.weights[kind as usize]
    }

    pub fn with(mut self, kind: OpKind, weight: u32) -> Self {
        self.weights[kind as usize] = weight;
        self
    }

    fn enabled(&self) -> Vec<OpKind> {
        OpKind::ALL.into_iter().filter(|&k| self.weight(k) > 0).collect()
    }
}

impl FromStr for OpMix {
    type Err = String;

    /// Comma-separated `category=weight` overrides of the default mix, e.g.
    /// `free=0,uaf=0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mix = OpMix::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| format!("expected category=weight, got `{item}`"))?;
            let kind = OpKind::ALL
                .into_iter()
                .find(|k| k.token() == key.trim())
                .ok_or_else(|| format!("unknown op category `{key}`"))?;
            let w = val
                .trim()
                .parse()
                .map_err(|_| format!("bad weight `{val}` for `{key}`"))?;
            mix = mix.with(kind, w);
        }
        if mix.weights.iter().all(|&w| w == 0) {
            return Err("op mix has no enabled category".into());
        }
        Ok(mix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzParams {
    pub n_objects: usize,
    pub size_dist: SizeDist,
    pub op_mix: OpMix,
    /// Operations emitted after each allocation.
    pub ops_per_object: usize,
    /// Placement the program is meant to run under. Carried here so a fuzz
    /// campaign is fully described by (seed, params).
    pub placement: Placement,
}

impl Default for FuzzParams {
    fn default() -> Self {
        Self {
            n_objects: 100,
            size_dist: SizeDist::Uniform { lo: 1, hi: 256 },
            op_mix: OpMix::default(),
            ops_per_object: 4,
            placement: Placement::Bump,
        }
    }
}

const OUT_AND_BACK_MIN: u64 = 1 << 16;
const OUT_AND_BACK_MAX: u64 = 1 << 20;
/// How far back the generator reaches when picking an object to operate on.
const RECENT: usize = 32;

#[derive(Debug, Clone)]
struct Obj {
    name: String,
    base_var: String,
    size: u64,
    live: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    out: Vec<Statement>,
    objects: Vec<Obj>,
    freed: Vec<usize>,
    next_var: usize,
}

impl Gen {
    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("v{}", self.next_var)
    }

    fn pick_live(&mut self) -> Option<usize> {
        let lo = self.objects.len().saturating_sub(RECENT);
        let candidates: Vec<usize> = (lo..self.objects.len()).filter(|&i| self.objects[i].live).collect();
        (!candidates.is_empty()).then(|| candidates[self.rng.gen_range(0..candidates.len())])
    }

    fn pick_freed(&mut self) -> Option<usize> {
        (!self.freed.is_empty()).then(|| self.freed[self.rng.gen_range(0..self.freed.len())])
    }

    fn width(&mut self, room: u64) -> u64 {
        let w = [1u64, 2, 4, 8][self.rng.gen_range(0..4)];
        w.min(room).max(1)
    }

    fn access(&mut self, var: String, width: u64) {
        if self.rng.gen_bool(0.5) {
            self.out.push(Statement::Load { var, width });
        } else {
            self.out.push(Statement::Store { var, width });
        }
    }

    fn add(&mut self, src: &str, delta: i64) -> String {
        let dst = self.fresh();
        self.out.push(Statement::Add {
            dst: dst.clone(),
            src: src.to_string(),
            delta,
        });
        dst
    }

    /// Emits one operation of `kind`. Returns false when no object qualifies.
    fn emit(&mut self, kind: OpKind) -> bool {
        let target = match kind {
            OpKind::UseAfterFree => self.pick_freed(),
            _ => self.pick_live(),
        };
        let Some(i) = target else { return false };
        let Obj {
            name,
            base_var,
            size,
            ..
        } = self.objects[i].clone();
        match kind {
            OpKind::InBounds => {
                let off = self.rng.gen_range(0..size);
                let var = self.fresh();
                self.out.push(Statement::Let {
                    var: var.clone(),
                    object: name,
                    offset: off,
                });
                let w = self.width(size - off);
                self.access(var, w);
            }
            OpKind::OutOfBounds => {
                let delta = match self.rng.gen_range(0..3) {
                    0 => size as i64 + self.rng.gen_range(0..16),
                    1 => -(self.rng.gen_range(1..=16)),
                    _ => size as i64 + self.rng.gen_range(0..1 << 16),
                };
                let var = self.add(&base_var, delta);
                let w = self.width(8);
                self.access(var, w);
            }
            OpKind::OutAndBack => {
                let j = self.rng.gen_range(OUT_AND_BACK_MIN..=OUT_AND_BACK_MAX) as i64;
                let j = if self.rng.gen_bool(0.5) { j } else { -j };
                let away = self.add(&base_var, j);
                let back = self.add(&away, -j);
                let w = self.width(size);
                self.access(back, w);
            }
            OpKind::OnePastEnd => {
                let end = self.add(&base_var, size as i64);
                let back = self.rng.gen_range(1..=size);
                let inside = self.add(&end, -(back as i64));
                self.access(inside, 1);
            }
            OpKind::Free => {
                if self.rng.gen_bool(0.5) {
                    self.out.push(Statement::Free { target: name });
                } else {
                    self.out.push(Statement::Free { target: base_var });
                }
                self.objects[i].live = false;
                self.freed.push(i);
            }
            OpKind::UseAfterFree => {
                match self.rng.gen_range(0..4) {
                    0 => self.out.push(Statement::Free { target: base_var }),
                    1 => self.out.push(Statement::Cast {
                        var: base_var,
                        ty: "byte".into(),
                    }),
                    _ => {
                        let w = self.width(size);
                        self.access(base_var, w);
                    }
                }
            }
            OpKind::Cast => {
                // mostly in range, sometimes one element past
                let off = self.rng.gen_range(0..size + 8);
                let var = self.fresh();
                self.out.push(Statement::Let {
                    var: var.clone(),
                    object: name,
                    offset: off,
                });
                let ty = ["byte", "int32", "int64", "pair", "node"][self.rng.gen_range(0..5)];
                self.out.push(Statement::Cast { var, ty: ty.into() });
            }
        }
        true
    }

    fn alloc(&mut self, size_dist: &SizeDist) {
        let size = size_dist.sample(&mut self.rng);
        let idx = self.objects.len();
        let ty = match self.rng.gen_range(0..4) {
            0 if size.is_multiple_of(8) => Some("pair"),
            1 if size.is_multiple_of(16) => Some("node"),
            2 if size.is_multiple_of(4) => Some("int32"),
            _ => None,
        };
        let name = format!("o{idx}");
        let base_var = format!("p{idx}");
        self.out.push(Statement::Alloc {
            id: name.clone(),
            size,
            ty: ty.map(String::from),
            align: None,
        });
        self.out.push(Statement::Let {
            var: base_var.clone(),
            object: name.clone(),
            offset: 0,
        });
        self.objects.push(Obj {
            name,
            base_var,
            size,
            live: true,
        });
    }
}

/// Generates a reproducible program from `seed`.
pub fn fuzz(seed: u64, params: &FuzzParams) -> TraceProgram {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: vec![
            Statement::TypedefStruct {
                name: "pair".into(),
                size: 8,
                fields: vec![(0, "int32".into()), (4, "int32".into())],
            },
            Statement::TypedefStruct {
                name: "node".into(),
                size: 16,
                fields: vec![(0, "int64".into()), (8, "pair".into())],
            },
        ],
        objects: Vec::new(),
        freed: Vec::new(),
        next_var: 0,
    };
    let weights = WeightedIndex::new(params.op_mix.weights).ok();
    let mut forced: VecDeque<OpKind> = params.op_mix.enabled().into();
    for _ in 0..params.n_objects {
        g.alloc(&params.size_dist);
        for _ in 0..params.ops_per_object {
            if let Some(kind) = forced.pop_front() {
                if !g.emit(kind) {
                    // nothing qualifies yet (e.g. uaf before any free)
                    forced.push_front(kind);
                    break;
                }
                continue;
            }
            let Some(w) = &weights else { break };
            let kind = OpKind::ALL[w.sample(&mut g.rng)];
            g.emit(kind);
        }
    }
    TraceProgram::from_statements(g.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_dist_parses() {
        assert_eq!("uniform:1:4096".parse(), Ok(SizeDist::Uniform { lo: 1, hi: 4096 }));
        assert_eq!("fixed:0x10".parse(), Ok(SizeDist::Fixed { size: 16 }));
        assert!("uniform:5:1".parse::<SizeDist>().is_err());
        assert!("fixed:0".parse::<SizeDist>().is_err());
        assert!("normal:1:2".parse::<SizeDist>().is_err());
        let d = SizeDist::Uniform { lo: 3, hi: 9 };
        assert_eq!(d.to_string().parse(), Ok(d));
    }

    #[test]
    fn op_mix_overrides() {
        let m: OpMix = "free=0, uaf=0".parse().unwrap();
        assert_eq!(m.weight(OpKind::Free), 0);
        assert_eq!(m.weight(OpKind::InBounds), OpMix::default().weight(OpKind::InBounds));
        assert!("bogus=1".parse::<OpMix>().is_err());
        assert!("in=0,oob=0,out-and-back=0,one-past-end=0,free=0,uaf=0,cast=0"
            .parse::<OpMix>()
            .is_err());
    }

    #[test]
    fn same_seed_same_program() {
        let p = FuzzParams::default();
        assert_eq!(fuzz(7, &p).to_string(), fuzz(7, &p).to_string());
        assert_ne!(fuzz(7, &p).to_string(), fuzz(8, &p).to_string());
    }

    #[test]
    fn generated_program_reparses() {
        let prog = fuzz(3, &FuzzParams::default());
        let again = super::super::parse::parse(&prog.to_string()).unwrap();
        assert_eq!(again.to_string(), prog.to_string());
    }

    #[test]
    fn no_frees_means_no_free_statements() {
        let params = FuzzParams {
            op_mix: "free=0".parse().unwrap(),
            ..FuzzParams::default()
        };
        let prog = fuzz(1, &params);
        assert!(!prog.statements.iter().any(|l| matches!(l.stmt, Statement::Free { .. })));
    }
}
