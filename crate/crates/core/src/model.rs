//! Finite POMDP data model and its line-oriented text format.
//!
//! ```text
//! states: s0 s1 ...
//! actions: a0 a1 ...
//! observations: o0 o1 ...
//! discount: 0.9
//! coords: 0 1 ...          # optional, one per state
//! dist:                    # optional alternative, followed by n rows
//! T: <action> : <state> : <state'> <prob>
//! O: <state> : <obs> <prob>
//! C: <state> : <action> <cost>
//! ```
//!
//! Every `T` and `O` entry must be given; missing `C` entries are 0.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{KernelView, StateMetric};

const ROW_TOL: f64 = 1e-12;

/// Raw components of a model, validated by [`FinitePomdp::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    /// `transition[u][x][x']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `channel[x][y]`
    pub channel: Vec<Vec<f64>>,
    /// `cost[x][u]`
    pub cost: Vec<Vec<f64>>,
    pub discount: f64,
    pub coords: Option<Vec<f64>>,
    pub dist: Option<Vec<Vec<f64>>>,
}

/// Immutable finite POMDP with a control-free observation channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePomdp {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    transition: Vec<f64>,
    channel: Vec<f64>,
    cost: Vec<f64>,
    discount: f64,
    coords: Option<Vec<f64>>,
    dist: Option<Vec<Vec<f64>>>,
    metric: StateMetric,
}

impl FinitePomdp {
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            states,
            actions,
            observations,
            transition,
            channel,
            cost,
            discount,
            coords,
            dist,
        } = parts;
        let (n, m, k) = (states.len(), actions.len(), observations.len());
        if n == 0 {
            return Err(Error::InvalidModel("state set is empty".into()));
        }
        if m == 0 {
            return Err(Error::InvalidModel("action set is empty".into()));
        }
        if k == 0 {
            return Err(Error::InvalidModel("observation set is empty".into()));
        }
        for (kind, names) in [("state", &states), ("action", &actions), ("observation", &observations)] {
            let mut seen = HashMap::new();
            for (i, s) in names.iter().enumerate() {
                if let Some(j) = seen.insert(s.as_str(), i) {
                    return Err(Error::InvalidModel(format!(
                        "duplicate {kind} `{s}` at positions {j} and {i}"
                    )));
                }
            }
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidModel(format!("discount {discount} outside (0,1)")));
        }

        check_shape(transition.len(), m, "transition actions")?;
        let mut flat_t = Vec::with_capacity(m * n * n);
        for (u, block) in transition.iter().enumerate() {
            check_shape(block.len(), n, "transition rows")?;
            for (x, row) in block.iter().enumerate() {
                check_shape(row.len(), n, "transition columns")?;
                check_row(row, || format!("T({}, {})", actions[u], states[x]))?;
                flat_t.extend_from_slice(row);
            }
        }
        check_shape(channel.len(), n, "channel rows")?;
        let mut flat_q = Vec::with_capacity(n * k);
        for (x, row) in channel.iter().enumerate() {
            check_shape(row.len(), k, "channel columns")?;
            check_row(row, || format!("O({})", states[x]))?;
            flat_q.extend_from_slice(row);
        }
        check_shape(cost.len(), n, "cost rows")?;
        let mut flat_c = Vec::with_capacity(n * m);
        for (x, row) in cost.iter().enumerate() {
            check_shape(row.len(), m, "cost columns")?;
            for (u, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NegativeEntry {
                        location: format!("C({}, {})", states[x], actions[u]),
                        value: v,
                    });
                }
            }
            flat_c.extend_from_slice(row);
        }

        let metric = match (&coords, &dist) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidModel("give either coords or dist, not both".into()))
            }
            (Some(c), None) => {
                check_shape(c.len(), n, "coords")?;
                StateMetric::from_coords(c)?
            }
            (None, Some(d)) => {
                check_shape(d.len(), n, "dist rows")?;
                StateMetric::from_matrix(d)?
            }
            (None, None) => StateMetric::discrete(n),
        };

        Ok(Self {
            states,
            actions,
            observations,
            transition: flat_t,
            channel: flat_q,
            cost: flat_c,
            discount,
            coords,
            dist,
            metric,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn observation_names(&self) -> &[String] {
        &self.observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `T(x' | x, u)`
    #[inline]
    pub fn transition(&self, u: usize, x: usize, next: usize) -> f64 {
        let n = self.n_states();
        self.transition[(u * n + x) * n + next]
    }

    #[inline]
    pub fn transition_row(&self, u: usize, x: usize) -> &[f64] {
        let n = self.n_states();
        &self.transition[(u * n + x) * n..(u * n + x + 1) * n]
    }

    /// `Q(y | x)`
    #[inline]
    pub fn channel(&self, x: usize, y: usize) -> f64 {
        self.channel[x * self.n_observations() + y]
    }

    #[inline]
    pub fn channel_row(&self, x: usize) -> &[f64] {
        let k = self.n_observations();
        &self.channel[x * k..(x + 1) * k]
    }

    /// `c(x, u)`
    #[inline]
    pub fn cost(&self, x: usize, u: usize) -> f64 {
        self.cost[x * self.n_actions() + u]
    }

    /// `||c||_inf`
    pub fn cost_sup(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    pub fn cost_min(&self) -> f64 {
        self.cost.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn coords(&self) -> Option<&[f64]> {
        self.coords.as_deref()
    }

    pub fn metric(&self) -> &StateMetric {
        &self.metric
    }

    pub fn diameter(&self) -> f64 {
        self.metric.diameter()
    }

    pub fn transition_kernel(&self, u: usize) -> KernelView {
        let rows = (0..self.n_states()).map(|x| self.transition_row(u, x).to_vec()).collect();
        KernelView::from_rows(rows).expect("validated at construction")
    }

    pub fn channel_kernel(&self) -> KernelView {
        let rows = (0..self.n_states()).map(|x| self.channel_row(x).to_vec()).collect();
        KernelView::from_rows(rows).expect("validated at construction")
    }

    /// Hidden-chain kernel when actions are drawn uniformly at random.
    pub fn exploration_kernel(&self) -> Vec<Vec<f64>> {
        let (n, m) = (self.n_states(), self.n_actions());
        let w = 1.0 / m as f64;
        (0..n)
            .map(|x| {
                let mut row = vec![0.0; n];
                for u in 0..m {
                    for (r, &t) in row.iter_mut().zip(self.transition_row(u, x)) {
                        *r += w * t;
                    }
                }
                row
            })
            .collect()
    }

    pub fn to_parts(&self) -> ModelParts {
        let (n, m) = (self.n_states(), self.n_actions());
        ModelParts {
            states: self.states.clone(),
            actions: self.actions.clone(),
            observations: self.observations.clone(),
            transition: (0..m)
                .map(|u| (0..n).map(|x| self.transition_row(u, x).to_vec()).collect())
                .collect(),
            channel: (0..n).map(|x| self.channel_row(x).to_vec()).collect(),
            cost: (0..n).map(|x| (0..m).map(|u| self.cost(x, u)).collect()).collect(),
            discount: self.discount,
            coords: self.coords.clone(),
            dist: self.dist.clone(),
        }
    }

    /// Render in the text format; reals use 17 significant digits so that
    /// parsing the output reproduces the model bit for bit.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "states: {}", self.states.join(" "));
        let _ = writeln!(out, "actions: {}", self.actions.join(" "));
        let _ = writeln!(out, "observations: {}", self.observations.join(" "));
        let _ = writeln!(out, "discount: {}", real(self.discount));
        if let Some(c) = &self.coords {
            let _ = writeln!(out, "coords: {}", c.iter().map(|v| real(*v)).collect::<Vec<_>>().join(" "));
        }
        if let Some(d) = &self.dist {
            out.push_str("dist:\n");
            for row in d {
                let _ = writeln!(out, "{}", row.iter().map(|v| real(*v)).collect::<Vec<_>>().join(" "));
            }
        }
        for (u, a) in self.actions.iter().enumerate() {
            for (x, s) in self.states.iter().enumerate() {
                for (x2, s2) in self.states.iter().enumerate() {
                    let _ = writeln!(out, "T: {a} : {s} : {s2} {}", real(self.transition(u, x, x2)));
                }
            }
        }
        for (x, s) in self.states.iter().enumerate() {
            for (y, o) in self.observations.iter().enumerate() {
                let _ = writeln!(out, "O: {s} : {o} {}", real(self.channel(x, y)));
            }
        }
        for (x, s) in self.states.iter().enumerate() {
            for (u, a) in self.actions.iter().enumerate() {
                let _ = writeln!(out, "C: {s} : {a} {}", real(self.cost(x, u)));
            }
        }
        out
    }
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_shape(actual: usize, expected: usize, what: &str) -> Result<()> {
    if actual != expected {
        return Err(Error::InvalidModel(format!(
            "{what}: expected {expected} entries, got {actual}"
        )));
    }
    Ok(())
}

fn check_row(row: &[f64], name: impl Fn() -> String) -> Result<()> {
    for &v in row {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NegativeEntry { location: name(), value: v });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::RowSum { row: name(), sum });
    }
    Ok(())
}

/// Parse and validate a model in the text format.
pub fn parse_model(text: &str) -> Result<FinitePomdp> {
    Parser::default().run(text)
}

#[derive(Default)]
struct Parser {
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
    discount: Option<f64>,
    coords: Option<Vec<f64>>,
    dist: Option<Vec<Vec<f64>>>,
    // Entries are resolved after the headers are known.
    t_entries: Vec<(usize, String, String, String, f64)>,
    o_entries: Vec<(usize, String, String, f64)>,
    c_entries: Vec<(usize, String, String, f64)>,
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, message: message.into() }
}

fn parse_real(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| syntax(line, format!("expected a real number, got `{tok}`")))
}

fn names(rest: &str, line: usize, what: &str) -> Result<Vec<String>> {
    let v: Vec<String> = rest.split_whitespace().map(str::to_owned).collect();
    if v.is_empty() {
        return Err(syntax(line, format!("`{what}:` needs at least one name")));
    }
    Ok(v)
}

impl Parser {
    fn run(mut self, text: &str) -> Result<FinitePomdp> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut i = 0;
        while i < lines.len() {
            let (no, line) = lines[i];
            i += 1;
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| syntax(no, format!("expected `key: value`, got `{line}`")))?;
            let rest = rest.trim();
            match key.trim() {
                "states" => self.states = Some(names(rest, no, "states")?),
                "actions" => self.actions = Some(names(rest, no, "actions")?),
                "observations" => self.observations = Some(names(rest, no, "observations")?),
                "discount" => self.discount = Some(parse_real(rest, no)?),
                "coords" => {
                    let v = rest
                        .split_whitespace()
                        .map(|t| parse_real(t, no))
                        .collect::<Result<Vec<_>>>()?;
                    self.coords = Some(v);
                }
                "dist" => {
                    let n = self
                        .states
                        .as_ref()
                        .ok_or_else(|| syntax(no, "`dist:` must follow `states:`"))?
                        .len();
                    let mut rows = Vec::with_capacity(n);
                    for _ in 0..n {
                        let (rno, rline) = *lines
                            .get(i)
                            .ok_or_else(|| syntax(no, format!("`dist:` needs {n} rows")))?;
                        i += 1;
                        let row = rline
                            .split_whitespace()
                            .map(|t| parse_real(t, rno))
                            .collect::<Result<Vec<_>>>()?;
                        if row.len() != n {
                            return Err(syntax(rno, format!("dist row needs {n} entries")));
                        }
                        rows.push(row);
                    }
                    self.dist = Some(rows);
                }
                "T" => {
                    let parts: Vec<&str> = rest.split(':').map(str::trim).collect();
                    if parts.len() != 3 {
                        return Err(syntax(no, "expected `T: <action> : <state> : <state'> <prob>`"));
                    }
                    let (next, p) = value_pair(parts[2], no)?;
                    self.t_entries.push((no, parts[0].into(), parts[1].into(), next, p));
                }
                "O" => {
                    let parts: Vec<&str> = rest.split(':').map(str::trim).collect();
                    if parts.len() != 2 {
                        return Err(syntax(no, "expected `O: <state> : <obs> <prob>`"));
                    }
                    let (obs, p) = value_pair(parts[1], no)?;
                    self.o_entries.push((no, parts[0].into(), obs, p));
                }
                "C" => {
                    let parts: Vec<&str> = rest.split(':').map(str::trim).collect();
                    if parts.len() != 2 {
                        return Err(syntax(no, "expected `C: <state> : <action> <cost>`"));
                    }
                    let (act, c) = value_pair(parts[1], no)?;
                    self.c_entries.push((no, parts[0].into(), act, c));
                }
                other => return Err(syntax(no, format!("unknown key `{other}`"))),
            }
        }
        self.assemble()
    }

    fn assemble(self) -> Result<FinitePomdp> {
        let states = self.states.ok_or(Error::MissingSection("states"))?;
        let actions = self.actions.ok_or(Error::MissingSection("actions"))?;
        let observations = self.observations.ok_or(Error::MissingSection("observations"))?;
        let discount = self.discount.ok_or(Error::MissingSection("discount"))?;
        let (n, m, k) = (states.len(), actions.len(), observations.len());
        let si = index_of(&states, "state");
        let ai = index_of(&actions, "action");
        let oi = index_of(&observations, "observation");

        let mut t = vec![vec![vec![None; n]; n]; m];
        for (no, a, s, s2, p) in self.t_entries {
            let (u, x, x2) = (ai(&a)?, si(&s)?, si(&s2)?);
            if t[u][x][x2].replace(p).is_some() {
                return Err(syntax(no, format!("duplicate entry T: {a} : {s} : {s2}")));
            }
        }
        let mut q = vec![vec![None; k]; n];
        for (no, s, o, p) in self.o_entries {
            let (x, y) = (si(&s)?, oi(&o)?);
            if q[x][y].replace(p).is_some() {
                return Err(syntax(no, format!("duplicate entry O: {s} : {o}")));
            }
        }
        let mut c = vec![vec![None; m]; n];
        for (no, s, a, v) in self.c_entries {
            let (x, u) = (si(&s)?, ai(&a)?);
            if c[x][u].replace(v).is_some() {
                return Err(syntax(no, format!("duplicate entry C: {s} : {a}")));
            }
        }

        let transition = t
            .into_iter()
            .enumerate()
            .map(|(u, block)| {
                block
                    .into_iter()
                    .enumerate()
                    .map(|(x, row)| {
                        row.into_iter()
                            .enumerate()
                            .map(|(x2, v)| {
                                v.ok_or_else(|| {
                                    Error::InvalidModel(format!(
                                        "missing entry T: {} : {} : {}",
                                        actions[u], states[x], states[x2]
                                    ))
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let channel = q
            .into_iter()
            .enumerate()
            .map(|(x, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(y, v)| {
                        v.ok_or_else(|| {
                            Error::InvalidModel(format!(
                                "missing entry O: {} : {}",
                                states[x], observations[y]
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let cost = c.into_iter().map(|row| row.into_iter().map(|v| v.unwrap_or(0.0)).collect()).collect();

        FinitePomdp::from_parts(ModelParts {
            states,
            actions,
            observations,
            transition,
            channel,
            cost,
            discount,
            coords: self.coords,
            dist: self.dist,
        })
    }
}

fn value_pair(s: &str, line: usize) -> Result<(String, f64)> {
    let mut it = s.split_whitespace();
    let (Some(name), Some(v), None) = (it.next(), it.next(), it.next()) else {
        return Err(syntax(line, format!("expected `<name> <value>`, got `{s}`")));
    };
    Ok((name.to_owned(), parse_real(v, line)?))
}

fn index_of(names: &[String], kind: &'static str) -> impl Fn(&str) -> Result<usize> {
    let map: HashMap<String, usize> = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    move |name| {
        map.get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol { kind, name: name.to_owned() })
    }
}
