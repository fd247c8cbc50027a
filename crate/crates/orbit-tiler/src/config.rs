//! Plain-text experiment configuration.
//!
//! The format is `key = value` lines grouped under `[section]` headers,
//! with `#` comments and blank lines ignored. Unknown sections or keys are
//! errors, reported with their line and column. The documented grammar:
//!
//! ```text
//! [system]
//! kind = rotation | bernoulli | finite
//! # rotation:
//! alpha = 0.618033988749894848204586834366   # >= 30 significant digits
//! alpha_cf = 1,1,1,1                          # or continued-fraction quotients
//! step = 0:1/2:1                              # lo:hi:coeff, repeatable
//! trig = 1:0.25:0                             # k:cos_coeff:sin_coeff, repeatable
//! # bernoulli:
//! p = 0.3
//! # finite:
//! cycles = 0 1 2 3 | 4 5                      # cycles of point ids, '|'-separated
//! fvals = 1 0 0 0 1/2 1/3                     # one rational per point id
//! weights = uniform                           # or one rational per point id
//!
//! [window]
//! width = 100000
//! margin = 64                                 # defaults to the horizon
//! start = 0                                   # optional fixed start
//!
//! [section]
//! density = 0.0001
//!
//! [tiling]
//! horizon = 64                                # or 'auto' (chain only)
//! threshold = 9/20
//!
//! [chain]
//! epsilon = 1/100
//! lower = 3/10                                # enables the two-sided probe
//! delta = 1/2                                 # ergodic-style epsilon rule
//!
//! [run]
//! windows = 100
//! starts = 100
//! n_grid = 10,100,1000,10000,100000
//! seed = 42
//! out = out
//! jobs = 1
//! ```
//!
//! Command-line flags (`--seed`, `--out`, `--jobs`) override `[run]` keys,
//! and the `ORBIT_TILER_CAP` environment variable overrides the horizon
//! search cap.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use num_rational::BigRational;
use num_traits::Signed;

use crate::harness::DEFAULT_CAP;
use crate::systems::{build_system, AlphaSpec, SystemSpec, WeightSpec, WindowStart};
use crate::value::Scalar;

#[derive(Debug, Clone)]
pub struct ConfigError {
    /// 1-based; 0 when the error has no single source line.
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config error: {}", self.message)
        } else {
            write!(
                f,
                "config error at line {}, column {}: {}",
                self.line, self.col, self.message
            )
        }
    }
}

impl std::error::Error for ConfigError {}

fn err_at(line: usize, col: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        col,
        message: message.into(),
    }
}

fn err(message: impl Into<String>) -> ConfigError {
    err_at(0, 0, message)
}

// ---------------------------------------------------------------------------
// Raw parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct RawItem {
    section: String,
    key: String,
    value: String,
    line: usize,
    col: usize,
}

fn parse_raw(text: &str) -> Result<Vec<RawItem>, ConfigError> {
    let mut items = Vec::new();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                err_at(line_no, 1, "section header must look like [name]")
            })?;
            section = name.trim().to_string();
            if section.is_empty() {
                return Err(err_at(line_no, 1, "empty section name"));
            }
            continue;
        }
        let eq = trimmed.find('=').ok_or_else(|| {
            err_at(line_no, 1, format!("expected 'key = value', got '{trimmed}'"))
        })?;
        let key = trimmed[..eq].trim().to_string();
        let value = trimmed[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(err_at(line_no, 1, "empty key"));
        }
        if section.is_empty() {
            return Err(err_at(
                line_no,
                1,
                format!("key '{key}' appears before any [section] header"),
            ));
        }
        let col = line.find(&key).map(|c| c + 1).unwrap_or(1);
        items.push(RawItem {
            section: section.clone(),
            key,
            value,
            line: line_no,
            col,
        });
    }
    Ok(items)
}

/// Lookup table with consumed-key tracking, so anything left over at the
/// end is reported as unknown.
struct ConfigMap {
    items: Vec<RawItem>,
    consumed: Vec<bool>,
}

impl ConfigMap {
    fn new(items: Vec<RawItem>) -> Self {
        let consumed = vec![false; items.len()];
        ConfigMap { items, consumed }
    }

    fn get(&mut self, section: &str, key: &str) -> Result<Option<&RawItem>, ConfigError> {
        let mut found: Option<usize> = None;
        for (i, item) in self.items.iter().enumerate() {
            if item.section == section && item.key == key {
                if let Some(prev) = found {
                    let p = &self.items[prev];
                    return Err(err_at(
                        item.line,
                        item.col,
                        format!("duplicate key '{key}' (first given at line {})", p.line),
                    ));
                }
                found = Some(i);
            }
        }
        Ok(found.map(|i| {
            self.consumed[i] = true;
            &self.items[i]
        }))
    }

    fn get_all(&mut self, section: &str, key: &str) -> Vec<RawItem> {
        let mut out = Vec::new();
        for (i, item) in self.items.iter().enumerate() {
            if item.section == section && item.key == key {
                self.consumed[i] = true;
                out.push(item.clone());
            }
        }
        out
    }

    fn finish(self, known_sections: &BTreeSet<&str>) -> Result<(), ConfigError> {
        for (item, consumed) in self.items.iter().zip(&self.consumed) {
            if !known_sections.contains(item.section.as_str()) {
                return Err(err_at(
                    item.line,
                    item.col,
                    format!("unknown section '[{}]'", item.section),
                ));
            }
            if !consumed {
                return Err(err_at(
                    item.line,
                    item.col,
                    format!("unknown key '{}' in section [{}]", item.key, item.section),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Typed value parsing
// ---------------------------------------------------------------------------

fn parse_usize(item: &RawItem) -> Result<usize, ConfigError> {
    item.value.parse::<usize>().map_err(|_| {
        err_at(
            item.line,
            item.col,
            format!("'{}' is not a non-negative integer", item.value),
        )
    })
}

fn parse_u64(item: &RawItem) -> Result<u64, ConfigError> {
    item.value.parse::<u64>().map_err(|_| {
        err_at(
            item.line,
            item.col,
            format!("'{}' is not a non-negative integer", item.value),
        )
    })
}

fn parse_f64(item: &RawItem) -> Result<f64, ConfigError> {
    item.value.parse::<f64>().map_err(|_| {
        err_at(
            item.line,
            item.col,
            format!("'{}' is not a number", item.value),
        )
    })
}

/// Rationals accept `p/q`, decimals, and plain integers.
fn rational_from_str(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: num_bigint::BigInt = num.trim().parse().ok()?;
        let d: num_bigint::BigInt = den.trim().parse().ok()?;
        if d == 0.into() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: num_bigint::BigInt = if digits.is_empty() {
        return None;
    } else {
        digits.parse().ok()?
    };
    let denom = num_bigint::BigInt::from(10u8).pow(frac_part.len() as u32);
    Some(BigRational::new(numer * num_bigint::BigInt::from(sign), denom))
}

fn parse_rational(item: &RawItem) -> Result<BigRational, ConfigError> {
    rational_from_str(&item.value).ok_or_else(|| {
        err_at(
            item.line,
            item.col,
            format!("'{}' is not a rational (use p/q or a decimal)", item.value),
        )
    })
}

fn parse_rational_list(item: &RawItem) -> Result<Vec<BigRational>, ConfigError> {
    item.value
        .split_whitespace()
        .map(|tok| {
            rational_from_str(tok).ok_or_else(|| {
                err_at(
                    item.line,
                    item.col,
                    format!("'{tok}' is not a rational"),
                )
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Lemma1,
    Sections,
    Tile,
    Chain,
    Converge,
    CondExp,
}

impl Subcommand {
    pub fn parse(name: &str) -> Option<Subcommand> {
        Some(match name {
            "lemma1" => Subcommand::Lemma1,
            "sections" => Subcommand::Sections,
            "tile" => Subcommand::Tile,
            "chain" => Subcommand::Chain,
            "converge" => Subcommand::Converge,
            "condexp" => Subcommand::CondExp,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Lemma1 => "lemma1",
            Subcommand::Sections => "sections",
            Subcommand::Tile => "tile",
            Subcommand::Chain => "chain",
            Subcommand::Converge => "converge",
            Subcommand::CondExp => "condexp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HorizonSpec {
    Fixed(usize),
    Auto,
}

/// Everything a run needs, fully resolved and validated.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: Subcommand,
    pub system: SystemSpec,
    pub width: usize,
    pub margin: usize,
    pub start: Option<WindowStart>,
    pub density: Option<f64>,
    pub horizon: HorizonSpec,
    pub threshold: Option<BigRational>,
    pub lower: Option<BigRational>,
    pub epsilon: BigRational,
    pub delta: Option<BigRational>,
    pub windows: usize,
    pub starts: usize,
    pub n_grid: Vec<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub cap: usize,
}

/// Command-line overrides applied on top of `[run]` keys.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub cap: Option<usize>,
}

const KNOWN_SECTIONS: [&str; 6] = ["system", "window", "section", "tiling", "chain", "run"];

/// Parse, type-check, and validate a config for `command`.
pub fn resolve(
    text: &str,
    command: Subcommand,
    overrides: &CliOverrides,
) -> Result<ExperimentConfig, ConfigError> {
    let mut map = ConfigMap::new(parse_raw(text)?);

    let system = resolve_system(&mut map)?;

    // [window]
    let width = match map.get("window", "width")? {
        Some(item) => {
            let w = parse_usize(item)?;
            if w == 0 {
                return Err(err_at(item.line, item.col, "width must be >= 1"));
            }
            w
        }
        None => 1 << 16,
    };
    let margin_item = map.get("window", "margin")?.cloned();
    let start = match map.get("window", "start")? {
        None => None,
        Some(item) => Some(resolve_start(&system, item)?),
    };

    // [section]
    let density = match map.get("section", "density")? {
        None => None,
        Some(item) => {
            let d = parse_f64(item)?;
            if !(0.0..=1.0).contains(&d) {
                return Err(err_at(item.line, item.col, "density must lie in [0, 1]"));
            }
            Some(d)
        }
    };

    // [tiling]
    let horizon = match map.get("tiling", "horizon")? {
        None => HorizonSpec::Auto,
        Some(item) if item.value == "auto" => HorizonSpec::Auto,
        Some(item) => {
            let h = parse_usize(item)?;
            if h == 0 {
                return Err(err_at(item.line, item.col, "horizon must be >= 1"));
            }
            HorizonSpec::Fixed(h)
        }
    };
    let threshold = match map.get("tiling", "threshold")? {
        None => None,
        Some(item) => Some(parse_rational(item)?),
    };

    // [chain]
    let epsilon = match map.get("chain", "epsilon")? {
        None => BigRational::ratio(1, 100),
        Some(item) => {
            let e = parse_rational(item)?;
            if !e.is_positive() {
                return Err(err_at(item.line, item.col, "epsilon must be positive"));
            }
            e
        }
    };
    let lower = match map.get("chain", "lower")? {
        None => None,
        Some(item) => Some(parse_rational(item)?),
    };
    let delta = match map.get("chain", "delta")? {
        None => None,
        Some(item) => {
            let d = parse_rational(item)?;
            if !d.is_positive() {
                return Err(err_at(item.line, item.col, "delta must be positive"));
            }
            Some(d)
        }
    };

    // [run]
    let windows = match map.get("run", "windows")? {
        Some(item) => parse_usize(item)?.max(1),
        None => 1,
    };
    let starts = match map.get("run", "starts")? {
        Some(item) => parse_usize(item)?.max(1),
        None => 10,
    };
    let n_grid = match map.get("run", "n_grid")? {
        None => vec![10, 100, 1_000, 10_000, 100_000],
        Some(item) => {
            let mut grid = Vec::new();
            for tok in item.value.split(',') {
                let n: usize = tok.trim().parse().map_err(|_| {
                    err_at(item.line, item.col, format!("'{}' is not an integer", tok.trim()))
                })?;
                if n == 0 {
                    return Err(err_at(item.line, item.col, "grid lengths must be >= 1"));
                }
                grid.push(n);
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(err_at(item.line, item.col, "n_grid must be strictly ascending"));
            }
            grid
        }
    };
    let config_seed = match map.get("run", "seed")? {
        Some(item) => Some(parse_u64(item)?),
        None => None,
    };
    let seed = overrides.seed.or(config_seed).unwrap_or(0);
    let config_out = map
        .get("run", "out")?
        .map(|item| PathBuf::from(item.value.clone()));
    let out_dir = overrides
        .out_dir
        .clone()
        .or(config_out)
        .unwrap_or_else(|| PathBuf::from("out"));
    let config_jobs = match map.get("run", "jobs")? {
        Some(item) => Some(parse_usize(item)?),
        None => None,
    };
    let jobs = overrides.jobs.or(config_jobs).unwrap_or(1).max(1);
    let cap = overrides.cap.unwrap_or(DEFAULT_CAP).max(1);

    let margin = match margin_item {
        Some(item) => {
            let m = parse_usize(&item)?;
            if m > width / 2 {
                return Err(err_at(
                    item.line,
                    item.col,
                    format!("margin {m} exceeds width/2 = {}", width / 2),
                ));
            }
            if let HorizonSpec::Fixed(h) = horizon {
                if m < h {
                    return Err(err_at(
                        item.line,
                        item.col,
                        format!("margin {m} is smaller than the horizon {h}"),
                    ));
                }
            }
            m
        }
        None => match horizon {
            HorizonSpec::Fixed(h) => h.min(width / 2),
            HorizonSpec::Auto => (width / 4).min(cap),
        },
    };

    // command-specific requirements
    match command {
        Subcommand::Lemma1 | Subcommand::CondExp => {
            if !matches!(system, SystemSpec::Finite { .. }) {
                return Err(err(format!(
                    "the '{}' command needs a finite-exact system ([system] kind = finite)",
                    command.name()
                )));
            }
        }
        Subcommand::Sections => {
            if density.is_none() {
                return Err(err("the 'sections' command needs [section] density"));
            }
            if !matches!(horizon, HorizonSpec::Fixed(_)) {
                return Err(err("the 'sections' command needs a fixed [tiling] horizon"));
            }
        }
        Subcommand::Tile => {
            if threshold.is_none() {
                return Err(err("the 'tile' command needs [tiling] threshold"));
            }
            if !matches!(horizon, HorizonSpec::Fixed(_)) {
                return Err(err("the 'tile' command needs a fixed [tiling] horizon"));
            }
        }
        Subcommand::Chain => {
            if threshold.is_none() {
                return Err(err("the 'chain' command needs [tiling] threshold"));
            }
        }
        Subcommand::Converge => {}
    }

    // two-sided budget: (b - a) > 2*eps*(|a| + |b| + 2), checked exactly
    if let (Some(a), Some(b)) = (&lower, &threshold) {
        if a >= b {
            return Err(err(format!("[chain] lower = {a} must be below [tiling] threshold = {b}")));
        }
        let two = BigRational::from_integer(2.into());
        let need = two.clone() * epsilon.clone() * (a.abs() + b.abs() + two);
        let have = b.clone() - a.clone();
        if have <= need {
            return Err(err(format!(
                "threshold budget violated: (threshold - lower) = {have} must exceed \
                 2*epsilon*(|lower| + |threshold| + 2) = {need}"
            )));
        }
    }

    let known: BTreeSet<&str> = KNOWN_SECTIONS.into_iter().collect();
    map.finish(&known)?;

    Ok(ExperimentConfig {
        command,
        system,
        width,
        margin,
        start,
        density,
        horizon,
        threshold,
        lower,
        epsilon,
        delta,
        windows,
        starts,
        n_grid,
        seed,
        out_dir,
        jobs,
        cap,
    })
}

fn resolve_system(map: &mut ConfigMap) -> Result<SystemSpec, ConfigError> {
    let kind_item = map
        .get("system", "kind")?
        .ok_or_else(|| err("missing [system] kind"))?
        .clone();
    let spec = match kind_item.value.as_str() {
        "rotation" => {
            let alpha = match (map.get("system", "alpha")?.cloned(), map.get("system", "alpha_cf")?.cloned()) {
                (Some(_), Some(cf)) => {
                    return Err(err_at(cf.line, cf.col, "give either alpha or alpha_cf, not both"))
                }
                (Some(dec), None) => AlphaSpec::Decimal(dec.value),
                (None, Some(cf)) => {
                    let mut quotients = Vec::new();
                    for tok in cf.value.split(',') {
                        let q: u64 = tok.trim().parse().map_err(|_| {
                            err_at(cf.line, cf.col, format!("'{}' is not an integer", tok.trim()))
                        })?;
                        quotients.push(q);
                    }
                    AlphaSpec::ContinuedFraction(quotients)
                }
                (None, None) => return Err(err("rotation systems need alpha or alpha_cf")),
            };
            let mut steps = Vec::new();
            for item in map.get_all("system", "step") {
                let parts: Vec<&str> = item.value.split(':').collect();
                if parts.len() != 3 {
                    return Err(err_at(item.line, item.col, "step must be lo:hi:coeff"));
                }
                let lo = rational_from_str(parts[0])
                    .ok_or_else(|| err_at(item.line, item.col, "bad step lower endpoint"))?;
                let hi = rational_from_str(parts[1])
                    .ok_or_else(|| err_at(item.line, item.col, "bad step upper endpoint"))?;
                let coeff: f64 = parts[2].trim().parse().map_err(|_| {
                    err_at(item.line, item.col, "bad step coefficient")
                })?;
                steps.push((lo, hi, coeff));
            }
            let mut trig = Vec::new();
            for item in map.get_all("system", "trig") {
                let parts: Vec<&str> = item.value.split(':').collect();
                if parts.len() != 3 {
                    return Err(err_at(item.line, item.col, "trig must be k:cos_coeff:sin_coeff"));
                }
                let freq: u32 = parts[0].trim().parse().map_err(|_| {
                    err_at(item.line, item.col, "bad trig frequency")
                })?;
                let c: f64 = parts[1].trim().parse().map_err(|_| {
                    err_at(item.line, item.col, "bad trig cosine coefficient")
                })?;
                let s: f64 = parts[2].trim().parse().map_err(|_| {
                    err_at(item.line, item.col, "bad trig sine coefficient")
                })?;
                trig.push((freq, c, s));
            }
            if steps.is_empty() && trig.is_empty() {
                return Err(err("rotation systems need at least one step or trig term"));
            }
            SystemSpec::Rotation { alpha, steps, trig }
        }
        "bernoulli" => {
            let p_item = map
                .get("system", "p")?
                .ok_or_else(|| err("bernoulli systems need p"))?;
            let p = parse_f64(p_item)?;
            SystemSpec::Bernoulli { p }
        }
        "finite" => {
            let cycles_item = map
                .get("system", "cycles")?
                .ok_or_else(|| err("finite systems need cycles"))?
                .clone();
            let mut cycles = Vec::new();
            for chunk in cycles_item.value.split('|') {
                let ids: Result<Vec<usize>, _> = chunk
                    .split_whitespace()
                    .map(|tok| tok.parse::<usize>())
                    .collect();
                let ids = ids.map_err(|_| {
                    err_at(cycles_item.line, cycles_item.col, "cycles must be lists of point ids")
                })?;
                cycles.push(ids);
            }
            let fvals_item = map
                .get("system", "fvals")?
                .ok_or_else(|| err("finite systems need fvals"))?
                .clone();
            let fvals = parse_rational_list(&fvals_item)?;
            let weights = match map.get("system", "weights")?.cloned() {
                None => WeightSpec::Uniform,
                Some(item) if item.value == "uniform" => WeightSpec::Uniform,
                Some(item) => WeightSpec::Explicit(parse_rational_list(&item)?),
            };
            SystemSpec::Finite {
                cycles,
                weights,
                fvals,
            }
        }
        other => {
            return Err(err_at(
                kind_item.line,
                kind_item.col,
                format!("unknown system kind '{other}' (rotation | bernoulli | finite)"),
            ))
        }
    };
    // validate now so bad system specs fail at parse time with a location
    build_system(&spec).map_err(|e| err_at(kind_item.line, kind_item.col, e.to_string()))?;
    Ok(spec)
}

fn resolve_start(system: &SystemSpec, item: &RawItem) -> Result<WindowStart, ConfigError> {
    match system {
        SystemSpec::Finite { .. } => Ok(WindowStart::Point(parse_usize(item)?)),
        SystemSpec::Rotation { .. } => {
            let angle = parse_rational(item)?;
            if angle.is_negative() || angle >= BigRational::from_integer(1.into()) {
                return Err(err_at(item.line, item.col, "start angle must lie in [0, 1)"));
            }
            Ok(WindowStart::Angle(angle))
        }
        SystemSpec::Bernoulli { .. } => Ok(WindowStart::Stream {
            seed: parse_u64(item)?,
            offset: 0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
[system]
kind = rotation
alpha_cf = 1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1
step = 0:1/2:1

[window]
width = 1000
margin = 16

[tiling]
horizon = 16
threshold = 9/20

[chain]
epsilon = 1/100

[run]
seed = 7
";

    #[test]
    fn golden_config_resolves() {
        let cfg = resolve(GOLDEN, Subcommand::Chain, &CliOverrides::default()).unwrap();
        assert_eq!(cfg.width, 1000);
        assert_eq!(cfg.margin, 16);
        assert_eq!(cfg.horizon, HorizonSpec::Fixed(16));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.threshold, Some(BigRational::ratio(9, 20)));
    }

    #[test]
    fn unknown_key_is_an_error_with_location() {
        let text = GOLDEN.replace("margin = 16", "margin = 16\nwobble = 3");
        let e = resolve(&text, Subcommand::Chain, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("unknown key 'wobble'"), "{e}");
        assert!(e.line > 0);
    }

    #[test]
    fn unknown_section_is_an_error() {
        let text = format!("{GOLDEN}\n[mystery]\nx = 1\n");
        let e = resolve(&text, Subcommand::Chain, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("unknown section"), "{e}");
    }

    #[test]
    fn negative_width_is_rejected_at_its_line() {
        let text = GOLDEN.replace("width = 1000", "width = -5");
        let e = resolve(&text, Subcommand::Chain, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("not a non-negative integer"), "{e}");
        let width_line = text.lines().position(|l| l.contains("width")).unwrap() + 1;
        assert_eq!(e.line, width_line);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = GOLDEN.replace("seed = 7", "seed = 7\nseed = 8");
        let e = resolve(&text, Subcommand::Chain, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("duplicate key 'seed'"), "{e}");
    }

    #[test]
    fn budget_is_checked_at_parse_time() {
        let text = GOLDEN.replace("epsilon = 1/100", "epsilon = 1/100\nlower = 44/100");
        // (0.45 - 0.44) = 0.01 <= 2*(0.01)*(0.44+0.45+2)
        let e = resolve(&text, Subcommand::Chain, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("budget violated"), "{e}");

        let ok = GOLDEN.replace("epsilon = 1/100", "epsilon = 1/100\nlower = 3/10");
        let cfg = resolve(&ok, Subcommand::Chain, &CliOverrides::default()).unwrap();
        assert_eq!(cfg.lower, Some(BigRational::ratio(3, 10)));
    }

    #[test]
    fn bad_system_spec_fails_at_parse() {
        let text = GOLDEN.replace("alpha_cf = 1,1", "alpha_cf = 0,1"); // prefix swap keeps line
        let e = resolve(&text, Subcommand::Chain, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("continued fraction"), "{e}");
    }

    #[test]
    fn finite_system_round_trip() {
        let text = "\
[system]
kind = finite
cycles = 0 1 2 3 | 4 5
fvals = 1 0 0 0 1/2 1/2
weights = uniform

[run]
windows = 10
";
        let cfg = resolve(text, Subcommand::Lemma1, &CliOverrides::default()).unwrap();
        assert!(matches!(cfg.system, SystemSpec::Finite { .. }));
        assert_eq!(cfg.windows, 10);
    }

    #[test]
    fn lemma1_requires_a_finite_system() {
        let e = resolve(GOLDEN, Subcommand::Lemma1, &CliOverrides::default()).unwrap_err();
        assert!(e.message.contains("finite-exact"), "{e}");
    }

    #[test]
    fn overrides_beat_config_keys() {
        let o = CliOverrides {
            seed: Some(99),
            out_dir: Some(PathBuf::from("elsewhere")),
            jobs: Some(4),
            cap: Some(1024),
        };
        let cfg = resolve(GOLDEN, Subcommand::Chain, &o).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.jobs, 4);
        assert_eq!(cfg.cap, 1024);
    }

    #[test]
    fn rational_forms() {
        assert_eq!(rational_from_str("9/20"), Some(BigRational::ratio(9, 20)));
        assert_eq!(rational_from_str("0.45"), Some(BigRational::ratio(9, 20)));
        assert_eq!(rational_from_str("2"), Some(BigRational::from_integer(2.into())));
        assert_eq!(
            rational_from_str("-0.5"),
            Some(-BigRational::ratio(1, 2))
        );
        assert_eq!(rational_from_str("1/0"), None);
        assert_eq!(rational_from_str("abc"), None);
    }
}
