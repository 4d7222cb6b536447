//! Sectioned `key = value` scenario files.
//!
//! ```text
//! # comment
//! [section]            or [section.sub]
//! key = "string"       strings are double quoted, \" and \\ escape
//! key = 1.5e-3         numbers
//! key = true           booleans
//! key = [1, "a", [2]]  arrays may nest and span lines
//! ```
//!
//! Every section and key is checked against a fixed schema; unknown names
//! are errors that carry the line they appear on.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::presets::{self, Preset};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    Array(Vec<Value>),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Array(_) => "array",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub value: Value,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Section {
    pub line: usize,
    pub entries: BTreeMap<String, Entry>,
}

/// Parsed but unvalidated sections, keyed by dotted name.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub sections: BTreeMap<String, Section>,
}

fn parse_error(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        message: msg.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Net bracket depth outside strings; used to join multi-line arrays.
fn bracket_balance(s: &str) -> i64 {
    let (mut depth, mut in_str, mut escaped) = (0i64, false, false);
    for ch in s.chars() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '[' if !in_str => depth += 1,
            ']' if !in_str => depth -= 1,
            _ => {}
        }
    }
    depth
}

struct ValueParser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl ValueParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value, CliError> {
        self.skip_ws();
        match self.src.get(self.pos) {
            None => Err(parse_error(self.line, "missing value")),
            Some(b'"') => self.string(),
            Some(b'[') => self.array(),
            Some(_) => self.scalar(),
        }
    }

    fn string(&mut self) -> Result<Value, CliError> {
        self.pos += 1;
        let mut out = String::new();
        let text = std::str::from_utf8(&self.src[self.pos..]).map_err(|_| parse_error(self.line, "invalid UTF-8"))?;
        let mut chars = text.char_indices();
        while let Some((i, ch)) = chars.next() {
            match ch {
                '"' => {
                    self.pos += i + 1;
                    return Ok(Value::Str(out));
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, c)) => return Err(parse_error(self.line, format!("unknown escape '\\{c}'"))),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(parse_error(self.line, "unterminated string"))
    }

    fn array(&mut self) -> Result<Value, CliError> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b']') {
            self.pos += 1;
            return Ok(Value::Array(items));
        }
        loop {
            items.push(self.value()?);
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Value::Array(items));
                }
                _ => return Err(parse_error(self.line, "expected ',' or ']' in array")),
            }
        }
    }

    fn scalar(&mut self) -> Result<Value, CliError> {
        let start = self.pos;
        while self.pos < self.src.len() && !matches!(self.src[self.pos], b',' | b']') && !self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match tok {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Num(v)),
                _ => Err(parse_error(self.line, format!("invalid value '{tok}' (strings must be quoted)"))),
            },
        }
    }
}

fn parse_value(text: &str, line: usize) -> Result<Value, CliError> {
    let mut p = ValueParser {
        src: text.as_bytes(),
        pos: 0,
        line,
    };
    let v = p.value()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(parse_error(line, format!("trailing characters after value: '{}'", &text[p.pos..])));
    }
    Ok(v)
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, CliError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        let lines: Vec<&str> = text.lines().collect();
        let mut n = 0;
        while n < lines.len() {
            let line_no = n + 1;
            let line = strip_comment(lines[n]).trim();
            n += 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_error(line_no, "section header must end with ']'"))?
                    .trim();
                if !name.split('.').all(valid_name) {
                    return Err(parse_error(line_no, format!("invalid section name '{name}'")));
                }
                if raw.sections.contains_key(name) {
                    return Err(parse_error(line_no, format!("duplicate section [{name}]")));
                }
                raw.sections.insert(
                    name.to_string(),
                    Section {
                        line: line_no,
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name.to_string());
                continue;
            }
            let (key, rhs) = line
                .split_once('=')
                .ok_or_else(|| parse_error(line_no, "expected 'key = value' or '[section]'"))?;
            let key = key.trim();
            if !valid_name(key) {
                return Err(parse_error(line_no, format!("invalid key '{key}'")));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| parse_error(line_no, format!("key '{key}' appears before any section")))?;
            let mut text = rhs.trim().to_string();
            while bracket_balance(&text) > 0 {
                let next = lines.get(n).ok_or_else(|| parse_error(line_no, "unterminated array"))?;
                text.push(' ');
                text.push_str(strip_comment(next).trim());
                n += 1;
            }
            let value = parse_value(&text, line_no)?;
            let entries = &mut raw.sections.get_mut(section).expect("current section exists").entries;
            if entries.contains_key(key) {
                return Err(parse_error(line_no, format!("duplicate key '{key}' in [{section}]")));
            }
            entries.insert(key.to_string(), Entry { value, line: line_no });
        }
        Ok(raw)
    }
}

const SPACETIME_KEYS: &[&str] = &["alpha", "beta", "t_range", "x_range", "topology"];
const BUNDLE_KEYS: &[&str] = &["rank"];
const OPERATOR_KEYS: &[&str] = &[
    "preset", "mass", "A_t", "A_x", "B", "A_t_im", "A_x_im", "B_im", "omega_t", "omega_x", "omega_t_im", "omega_x_im",
];
const GRID_KEYS: &[&str] = &["nx", "cfl", "t_span"];
const DATA_KEYS: &[&str] = &["t0", "components", "components_im"];
const SOURCE_KEYS: &[&str] = &["components", "components_im"];
const WINDOW_KEYS: &[&str] = &["center", "halfwidth", "steepness"];
const SOLVER_KEYS: &[&str] = &["dissipation"];
const ANALYSIS_KEYS: &[&str] = &["sigma_prime", "beta_levels", "ladder", "seed", "covector_samples"];
const TOLERANCE_KEYS: &[&str] = &[
    "symbol", "determinant", "min_order", "reduction", "leak", "identity", "pairing", "control", "round_trip",
    "linearity", "hermitian", "drift", "gram",
];
const OUTPUT_KEYS: &[&str] = &["directory", "formats"];

fn schema(section: &str) -> Option<&'static [&'static str]> {
    Some(match section {
        "spacetime" => SPACETIME_KEYS,
        "bundle" => BUNDLE_KEYS,
        "operator_P" | "operator_Q" => OPERATOR_KEYS,
        "grid" => GRID_KEYS,
        "initial_data" | "second_data" => DATA_KEYS,
        "source" | "dual_source" => SOURCE_KEYS,
        "initial_data.window" | "second_data.window" | "source.window" | "source.t_window" | "dual_source.window"
        | "dual_source.t_window" => WINDOW_KEYS,
        "solver" => SOLVER_KEYS,
        "analysis" => ANALYSIS_KEYS,
        "tolerances" => TOLERANCE_KEYS,
        "output" => OUTPUT_KEYS,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyName {
    Line,
    Circle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacetimeConfig {
    pub alpha: String,
    pub beta: String,
    pub t_range: [f64; 2],
    pub x_range: [f64; 2],
    pub topology: TopologyName,
}

/// Row-major `rank × rank` coefficient arrays; `None` imaginary parts are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientArrays {
    pub re: Vec<String>,
    pub im: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    /// Preset the coefficients were resolved from, if any.
    pub preset: Option<Preset>,
    pub mass: Option<f64>,
    pub a_t: CoefficientArrays,
    pub a_x: CoefficientArrays,
    pub b: CoefficientArrays,
    pub omega_t: Option<CoefficientArrays>,
    pub omega_x: Option<CoefficientArrays>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub cfl: f64,
    pub t_span: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub center: f64,
    pub halfwidth: f64,
    pub steepness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub t0: f64,
    pub components: Vec<String>,
    pub components_im: Option<Vec<String>>,
    pub window: WindowConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub components: Vec<String>,
    pub components_im: Option<Vec<String>>,
    pub window: WindowConfig,
    pub t_window: WindowConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sigma_prime: f64,
    pub beta_levels: Vec<f64>,
    pub ladder: Vec<usize>,
    pub seed: u64,
    pub covector_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute symbol deviation for the pair check.
    pub symbol: f64,
    /// Slack in `|det σ_P(ξ)| ≥ |g(ξ,ξ)|^{k/2}`.
    pub determinant: f64,
    pub min_order: f64,
    pub reduction: f64,
    pub leak: f64,
    pub identity: f64,
    pub pairing: f64,
    /// Lower bound on the mismatched-direction pairing defect.
    pub control: f64,
    pub round_trip: f64,
    pub linearity: f64,
    pub hermitian: f64,
    pub drift: f64,
    pub gram: f64,
}

impl Default for Tolerances {
    fn default() -> Tolerances {
        Tolerances {
            symbol: 1e-12,
            determinant: 1e-10,
            min_order: 1.8,
            reduction: 1e-3,
            leak: 1e-7,
            identity: 5e-2,
            pairing: 1e-3,
            control: 1e-1,
            round_trip: 1e-3,
            linearity: 1e-12,
            hermitian: 1e-12,
            drift: 1e-2,
            gram: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

/// A validated scenario with presets resolved into explicit coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub spacetime: SpacetimeConfig,
    pub rank: usize,
    pub operator_p: OperatorConfig,
    pub operator_q: OperatorConfig,
    pub grid: GridConfig,
    pub initial_data: DataConfig,
    pub second_data: Option<DataConfig>,
    pub source: Option<SourceConfig>,
    pub dual_source: Option<SourceConfig>,
    pub dissipation: f64,
    pub analysis: AnalysisConfig,
    pub tolerances: Tolerances,
    #[serde(skip)]
    pub output: Option<OutputConfig>,
}

/// Typed access to one section, remembering which keys were consumed.
struct Reader<'a> {
    name: &'a str,
    section: Option<&'a Section>,
}

fn validation(key: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation {
        key: key.into(),
        message: message.into(),
    }
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig, name: &'a str) -> Reader<'a> {
        Reader {
            name,
            section: raw.sections.get(name),
        }
    }

    fn present(&self) -> bool {
        self.section.is_some()
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.section.and_then(|s| s.entries.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    fn wrong_type(&self, key: &str, want: &str, e: &Entry) -> CliError {
        validation(
            self.path(key),
            format!("line {}: expected {want}, found {}", e.line, e.value.kind()),
        )
    }

    fn required<T>(&self, key: &str, f: impl FnOnce(&Self, &str) -> Result<Option<T>, CliError>) -> Result<T, CliError> {
        f(self, key)?.ok_or_else(|| validation(self.path(key), format!("{} required", self.path(key))))
    }

    fn num(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Entry { value: Value::Num(v), .. }) => Ok(Some(*v)),
            Some(e) => Err(self.wrong_type(key, "a number", e)),
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.num(key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(Some(v as usize)),
            Some(v) => Err(validation(self.path(key), format!("expected a nonnegative integer, found {v}"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Entry { value: Value::Str(s), .. }) => Ok(Some(s.clone())),
            Some(e) => Err(self.wrong_type(key, "a quoted string", e)),
        }
    }

    /// Scalars may be written as numbers or as expression strings.
    fn expression(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.get(key) {
            Some(Entry { value: Value::Num(v), .. }) => Ok(Some(format!("{v:?}"))),
            _ => self.string(key),
        }
    }

    fn array(&self, key: &str) -> Result<Option<&'a [Value]>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Entry { value: Value::Array(v), .. }) => Ok(Some(v)),
            Some(e) => Err(self.wrong_type(key, "an array", e)),
        }
    }

    fn nums(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(items) = self.array(key)? else { return Ok(None) };
        items
            .iter()
            .map(|v| match v {
                Value::Num(x) => Ok(*x),
                other => Err(validation(self.path(key), format!("expected numbers, found {}", other.kind()))),
            })
            .collect::<Result<_, _>>()
            .map(Some)
    }

    fn pair(&self, key: &str) -> Result<Option<[f64; 2]>, CliError> {
        match self.nums(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some([v[0], v[1]])),
            Some(v) => Err(validation(self.path(key), format!("expected [min, max], found {} entries", v.len()))),
        }
    }

    /// Expression strings, flattening one level of nesting (`[[..], [..]]`
    /// rows are accepted as well as a flat row-major list).
    fn expressions(&self, key: &str) -> Result<Option<Vec<String>>, CliError> {
        let Some(items) = self.array(key)? else { return Ok(None) };
        let mut out = Vec::new();
        let mut push = |v: &Value| match v {
            Value::Str(s) => {
                out.push(s.clone());
                Ok(())
            }
            Value::Num(x) => {
                out.push(format!("{x:?}"));
                Ok(())
            }
            other => Err(validation(self.path(key), format!("expected expressions, found {}", other.kind()))),
        };
        for item in items {
            match item {
                Value::Array(row) => row.iter().try_for_each(&mut push)?,
                v => push(v)?,
            }
        }
        Ok(Some(out))
    }
}

fn check_schema(raw: &RawConfig) -> Result<(), CliError> {
    for (name, section) in &raw.sections {
        let Some(keys) = schema(name) else {
            return Err(parse_error(section.line, format!("unknown section [{name}]")));
        };
        for (key, entry) in &section.entries {
            if !keys.contains(&key.as_str()) {
                return Err(parse_error(entry.line, format!("unknown key '{key}' in [{name}]")));
            }
        }
    }
    Ok(())
}

fn window(raw: &RawConfig, name: &str) -> Result<WindowConfig, CliError> {
    let r = Reader::new(raw, name);
    if !r.present() {
        return Err(validation(name, format!("[{name}] required")));
    }
    let w = WindowConfig {
        center: r.required("center", Reader::num)?,
        halfwidth: r.required("halfwidth", Reader::num)?,
        steepness: r.required("steepness", Reader::num)?,
    };
    if !(w.halfwidth > 0.0 && w.steepness > 0.0) {
        return Err(validation(name, "halfwidth and steepness must be positive"));
    }
    Ok(w)
}

fn components(r: &Reader, rank: usize) -> Result<(Vec<String>, Option<Vec<String>>), CliError> {
    let re = r.required("components", Reader::expressions)?;
    let im = r.expressions("components_im")?;
    if re.len() != rank {
        return Err(validation(r.path("components"), format!("{} components for rank {rank}", re.len())));
    }
    if let Some(im) = &im {
        if im.len() != rank {
            return Err(validation(r.path("components_im"), format!("{} components for rank {rank}", im.len())));
        }
    }
    Ok((re, im))
}

fn data(raw: &RawConfig, name: &str, rank: usize) -> Result<Option<DataConfig>, CliError> {
    let r = Reader::new(raw, name);
    if !r.present() {
        return Ok(None);
    }
    let (components, components_im) = components(&r, rank)?;
    Ok(Some(DataConfig {
        t0: r.num("t0")?.unwrap_or(0.0),
        components,
        components_im,
        window: window(raw, &format!("{name}.window"))?,
    }))
}

fn read_source(raw: &RawConfig, name: &str, rank: usize) -> Result<Option<SourceConfig>, CliError> {
    let r = Reader::new(raw, name);
    if !r.present() {
        return Ok(None);
    }
    let (components, components_im) = components(&r, rank)?;
    Ok(Some(SourceConfig {
        components,
        components_im,
        window: window(raw, &format!("{name}.window"))?,
        t_window: window(raw, &format!("{name}.t_window"))?,
    }))
}

fn coefficient_arrays(r: &Reader, key: &str, rank: usize, required: bool) -> Result<Option<CoefficientArrays>, CliError> {
    let re = r.expressions(key)?;
    let im_key = format!("{key}_im");
    let im = r.expressions(&im_key)?;
    let re = match (re, &im) {
        (Some(re), _) => re,
        (None, Some(_)) => return Err(validation(r.path(&im_key), format!("{} given without {}", im_key, key))),
        (None, None) if required => return Err(validation(r.path(key), format!("{} required", r.path(key)))),
        (None, None) => return Ok(None),
    };
    let n = rank * rank;
    if re.len() != n {
        return Err(validation(r.path(key), format!("{} entries for a {rank}x{rank} matrix", re.len())));
    }
    if im.as_ref().is_some_and(|im| im.len() != n) {
        return Err(validation(r.path(&im_key), format!("expected {n} entries")));
    }
    Ok(Some(CoefficientArrays { re, im }))
}

const EXPLICIT_KEYS: &[&str] = &["A_t", "A_x", "B", "A_t_im", "A_x_im", "B_im", "omega_t", "omega_x", "omega_t_im", "omega_x_im"];

fn operator(r: &Reader, rank: usize) -> Result<OperatorConfig, CliError> {
    Ok(OperatorConfig {
        preset: None,
        mass: None,
        a_t: coefficient_arrays(r, "A_t", rank, true)?.expect("required"),
        a_x: coefficient_arrays(r, "A_x", rank, true)?.expect("required"),
        b: coefficient_arrays(r, "B", rank, false)?.unwrap_or_else(|| CoefficientArrays {
            re: vec!["0".into(); rank * rank],
            im: None,
        }),
        omega_t: coefficient_arrays(r, "omega_t", rank, false)?,
        omega_x: coefficient_arrays(r, "omega_x", rank, false)?,
    })
}

fn preset_of(r: &Reader) -> Result<Option<Preset>, CliError> {
    let Some(name) = r.string("preset")? else { return Ok(None) };
    let preset = Preset::from_name(&name).ok_or_else(|| {
        validation(
            r.path("preset"),
            format!("unknown preset '{name}'; expected one of {}", Preset::NAMES.join(", ")),
        )
    })?;
    if let Some(k) = EXPLICIT_KEYS.iter().find(|k| r.has(k)) {
        return Err(validation(
            r.path(k),
            "presets and explicit coefficients are mutually exclusive",
        ));
    }
    Ok(Some(preset))
}

fn operators(raw: &RawConfig, spacetime: &SpacetimeConfig, rank: usize) -> Result<(OperatorConfig, OperatorConfig), CliError> {
    let rp = Reader::new(raw, "operator_P");
    let rq = Reader::new(raw, "operator_Q");
    if !rp.present() {
        return Err(validation("operator_P", "[operator_P] required"));
    }
    let p_preset = preset_of(&rp)?;
    let q_preset = if rq.present() { preset_of(&rq)? } else { None };
    match p_preset {
        Some(preset) => {
            if rq.present() && q_preset != Some(preset) {
                return Err(validation(
                    "operator_Q",
                    format!("operator_P uses preset '{}'; omit [operator_Q] or use the same preset", preset.name()),
                ));
            }
            if rp.has("mass") && rq.has("mass") && rp.num("mass")? != rq.num("mass")? {
                return Err(validation("operator_Q.mass", "preset partners must share one mass"));
            }
            let mass = rp.num("mass")?.or(rq.num("mass")?);
            presets::resolve(preset, mass, spacetime, rank)
        }
        None => {
            if q_preset.is_some() {
                return Err(validation("operator_Q.preset", "a preset partner needs the same preset in [operator_P]"));
            }
            if rp.has("mass") {
                return Err(validation("operator_P.mass", "mass applies to presets only"));
            }
            if !rq.present() {
                return Err(validation("operator_Q", "[operator_Q] required without a preset"));
            }
            if rq.has("mass") {
                return Err(validation("operator_Q.mass", "mass applies to presets only"));
            }
            Ok((operator(&rp, rank)?, operator(&rq, rank)?))
        }
    }
}

fn tolerances(raw: &RawConfig) -> Result<Tolerances, CliError> {
    let r = Reader::new(raw, "tolerances");
    let mut t = Tolerances::default();
    let fields: [(&str, &mut f64); 13] = [
        ("symbol", &mut t.symbol),
        ("determinant", &mut t.determinant),
        ("min_order", &mut t.min_order),
        ("reduction", &mut t.reduction),
        ("leak", &mut t.leak),
        ("identity", &mut t.identity),
        ("pairing", &mut t.pairing),
        ("control", &mut t.control),
        ("round_trip", &mut t.round_trip),
        ("linearity", &mut t.linearity),
        ("hermitian", &mut t.hermitian),
        ("drift", &mut t.drift),
        ("gram", &mut t.gram),
    ];
    for (key, slot) in fields {
        if let Some(v) = r.num(key)? {
            if !(v >= 0.0) {
                return Err(validation(r.path(key), "tolerances must be nonnegative"));
            }
            *slot = v;
        }
    }
    Ok(t)
}

impl ScenarioConfig {
    /// Parses, resolves presets and validates. Numerical checks that need the
    /// grid (causal margins, expression evaluation) run in
    /// [`crate::scenario::Scenario::build`].
    pub fn from_text(text: &str) -> Result<ScenarioConfig, CliError> {
        let raw = RawConfig::parse(text)?;
        check_schema(&raw)?;

        let st = Reader::new(&raw, "spacetime");
        if !st.present() {
            return Err(validation("spacetime", "[spacetime] required"));
        }
        let topology = match st.string("topology")?.as_deref() {
            None | Some("line") => TopologyName::Line,
            Some("circle") => TopologyName::Circle,
            Some(other) => return Err(validation("spacetime.topology", format!("expected \"line\" or \"circle\", found \"{other}\""))),
        };
        let spacetime = SpacetimeConfig {
            alpha: st.required("alpha", Reader::expression)?,
            beta: st.required("beta", Reader::expression)?,
            t_range: st.required("t_range", Reader::pair)?,
            x_range: st.required("x_range", Reader::pair)?,
            topology,
        };

        let b = Reader::new(&raw, "bundle");
        let rank = b.required("rank", Reader::count)?;
        if rank == 0 {
            return Err(validation("bundle.rank", "rank must be positive"));
        }
        let (operator_p, operator_q) = operators(&raw, &spacetime, rank)?;

        let g = Reader::new(&raw, "grid");
        let grid = GridConfig {
            nx: g.required("nx", Reader::count)?,
            cfl: g.num("cfl")?.unwrap_or(prehyp_core::grid::DEFAULT_CFL),
            t_span: g.pair("t_span")?,
        };
        if grid.nx < prehyp_core::grid::MIN_NODES {
            return Err(validation("grid.nx", format!("at least {} nodes required", prehyp_core::grid::MIN_NODES)));
        }

        let initial_data = data(&raw, "initial_data", rank)?.ok_or_else(|| validation("initial_data", "[initial_data] required"))?;
        let second_data = data(&raw, "second_data", rank)?;
        if second_data.as_ref().is_some_and(|d| d.t0 != initial_data.t0) {
            return Err(validation("second_data.t0", "second_data must share the hypersurface of initial_data"));
        }
        let source = read_source(&raw, "source", rank)?;
        let dual_source = read_source(&raw, "dual_source", rank)?;
        if source.is_some() != dual_source.is_some() {
            return Err(validation("dual_source", "[source] and [dual_source] must be given together"));
        }

        let dissipation = Reader::new(&raw, "solver").num("dissipation")?.unwrap_or(0.0);
        if !(dissipation >= 0.0) {
            return Err(validation("solver.dissipation", "must be nonnegative"));
        }

        let a = Reader::new(&raw, "analysis");
        let default_ladder = vec![grid.nx / 4, grid.nx / 2, grid.nx];
        let analysis = AnalysisConfig {
            sigma_prime: a.num("sigma_prime")?.unwrap_or(initial_data.t0 + 0.5 * (spacetime.t_range[1] - initial_data.t0)),
            beta_levels: a.nums("beta_levels")?.unwrap_or_else(|| vec![initial_data.t0]),
            ladder: match a.nums("ladder")? {
                Some(v) => v
                    .into_iter()
                    .map(|x| {
                        if x >= prehyp_core::grid::MIN_NODES as f64 && x.fract() == 0.0 {
                            Ok(x as usize)
                        } else {
                            Err(validation("analysis.ladder", format!("invalid node count {x}")))
                        }
                    })
                    .collect::<Result<_, _>>()?,
                None => default_ladder,
            },
            seed: a.count("seed")?.unwrap_or(0) as u64,
            covector_samples: a.count("covector_samples")?.unwrap_or(200),
        };
        if analysis.ladder.len() < 2 || analysis.ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(validation("analysis.ladder", "ladder needs at least two levels, each doubling nx"));
        }
        if analysis.beta_levels.is_empty() {
            return Err(validation("analysis.beta_levels", "at least one level required"));
        }

        let o = Reader::new(&raw, "output");
        let output = if o.present() {
            let formats = match o.array("formats")? {
                None => vec![Format::Json, Format::Csv],
                Some(items) => {
                    let mut f = Vec::new();
                    for v in items {
                        match v {
                            Value::Str(s) if s == "json" => f.push(Format::Json),
                            Value::Str(s) if s == "csv" => f.push(Format::Csv),
                            other => return Err(validation("output.formats", format!("unknown format {other:?}"))),
                        }
                    }
                    f.sort();
                    f.dedup();
                    f
                }
            };
            Some(OutputConfig {
                directory: o.string("directory")?.unwrap_or_else(|| "out".into()),
                formats,
            })
        } else {
            None
        };

        Ok(ScenarioConfig {
            spacetime,
            rank,
            operator_p,
            operator_q,
            grid,
            initial_data,
            second_data,
            source,
            dual_source,
            dissipation,
            analysis,
            tolerances: tolerances(&raw)?,
            output,
        })
    }
}

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let config = ScenarioConfig::from_text(&text)?;
    crate::scenario::Scenario::build(&config, config.grid.nx)?;
    Ok(config)
}
