//! Structural algebra of `P` and `Q` polynomial classes.
//!
//! A term stands for the whole class of universal linear combinations with
//! the given orders, so coefficients are never tracked and a sum absorbs
//! repeats and classes contained in other summands.
//!
//! * `P(k,l)`: `l` factors `∇^i A` with `k` derivatives in total.
//! * `Q(k,l,m)`: one factor `∇̄^r R̄`, `ν` factors `∇^i A` and any number of
//!   `DF` or normal injections, with `r + |i| + ν = k + l`, `|i| ≤ k` and
//!   `r ≤ m` (no bound when `m` is absent).
//! * `QRR(k,l)`: the same with two ambient curvature factors.
//!
//! Under a rescaling of the ambient metric every term is homogeneous with
//! weight [`PQTerm::grade`]; derivations check that every intermediate
//! expression stays homogeneous.

use std::cmp::Reverse;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PqError {
    #[error("unsupported term {0} for {1}")]
    Unsupported(String, &'static str),
    #[error("derivation failed: {msg}\n{trace}")]
    Derivation { msg: String, trace: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PQTerm {
    P {
        k: u32,
        l: u32,
    },
    Q {
        k: u32,
        l: u32,
        m: Option<u32>,
    },
    QRR {
        k: u32,
        l: u32,
    },
    /// A named leading-order expression together with its scaling weight.
    LeadingOp {
        name: String,
        grade: u32,
    },
}

pub fn p(k: u32, l: u32) -> PQTerm {
    PQTerm::P { k, l }
}

pub fn q(k: u32, l: u32, m: u32) -> PQTerm {
    PQTerm::Q { k, l, m: Some(m) }
}

pub fn qrr(k: u32, l: u32) -> PQTerm {
    PQTerm::QRR { k, l }
}

pub fn leading(name: &str, grade: u32) -> PQTerm {
    PQTerm::LeadingOp { name: name.to_string(), grade }
}

impl PQTerm {
    /// Scaling weight: `A` counts 1, each derivative 1, `R̄` counts 2.
    pub fn grade(&self) -> u32 {
        match self {
            PQTerm::P { k, l } => k + l,
            PQTerm::Q { k, l, .. } => k + l + 2,
            PQTerm::QRR { k, l } => k + l + 4,
            PQTerm::LeadingOp { grade, .. } => *grade,
        }
    }

    pub fn involves_ambient(&self) -> bool {
        matches!(self, PQTerm::Q { .. } | PQTerm::QRR { .. })
    }

    /// Class inclusion `self ⊆ other`.
    pub fn subsumed_by(&self, other: &PQTerm) -> bool {
        use PQTerm::*;
        match (self, other) {
            (Q { k, l, m }, Q { k: k2, l: l2, m: m2 }) => {
                let m_ok = match (m, m2) {
                    (_, None) => true,
                    (None, Some(_)) => false,
                    (Some(a), Some(b)) => a <= b,
                };
                k + l == k2 + l2 && k <= k2 && m_ok
            }
            (QRR { k, l }, QRR { k: k2, l: l2 }) => k + l == k2 + l2 && k <= k2,
            _ => self == other,
        }
    }

    fn sort_key(&self) -> (u8, Reverse<u32>, u32, Option<u32>, String) {
        match self {
            PQTerm::LeadingOp { name, .. } => (0, Reverse(0), 0, None, name.clone()),
            PQTerm::P { k, l } => (1, Reverse(*k), *l, None, String::new()),
            PQTerm::Q { k, l, m } => (2, Reverse(*k), *l, *m, String::new()),
            PQTerm::QRR { k, l } => (3, Reverse(*k), *l, None, String::new()),
        }
    }
}

impl fmt::Display for PQTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PQTerm::P { k, l } => write!(f, "P({k},{l})"),
            PQTerm::Q { k, l, m: Some(m) } => write!(f, "Q({k},{l},{m})"),
            PQTerm::Q { k, l, m: None } => write!(f, "Q({k},{l})"),
            PQTerm::QRR { k, l } => write!(f, "QRR({k},{l})"),
            PQTerm::LeadingOp { name, .. } => write!(f, "{name}"),
        }
    }
}

/// A multiset of terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PQSum(pub Vec<PQTerm>);

impl PQSum {
    pub fn new(terms: impl IntoIterator<Item = PQTerm>) -> Self {
        PQSum(terms.into_iter().collect())
    }

    pub fn terms(&self) -> &[PQTerm] {
        &self.0
    }

    pub fn push(&mut self, t: PQTerm) {
        self.0.push(t);
    }

    pub fn extend(&mut self, s: PQSum) {
        self.0.extend(s.0);
    }

    /// Removes repeats and summands contained in another summand, then
    /// sorts into display order.
    pub fn normalize(&self) -> PQSum {
        let mut t = self.0.clone();
        t.sort_by_key(|x| x.sort_key());
        t.dedup();
        let kept: Vec<PQTerm> = t
            .iter()
            .enumerate()
            .filter(|(i, a)| !t.iter().enumerate().any(|(j, b)| *i != j && a.subsumed_by(b)))
            .map(|(_, a)| a.clone())
            .collect();
        PQSum(kept)
    }

    pub fn drop_ambient(&self) -> PQSum {
        PQSum(self.0.iter().filter(|t| !t.involves_ambient()).cloned().collect())
    }

    /// The common grade of all summands, if there is one.
    pub fn grade(&self) -> Option<u32> {
        let g = self.0.first()?.grade();
        self.0.iter().all(|t| t.grade() == g).then_some(g)
    }
}

impl fmt::Display for PQSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}

/// rule1 and rule2: `∇P(k,l) = P(k+1,l)`, `∇Q(k,l,m) = Q(k+1,l,m+1)`,
/// and `∇QRR(k,l) = QRR(k+1,l)`.
pub fn nabla(t: &PQTerm) -> Result<PQSum, PqError> {
    Ok(PQSum(vec![match t {
        PQTerm::P { k, l } => p(k + 1, *l),
        PQTerm::Q { k, l, m } => PQTerm::Q { k: k + 1, l: *l, m: m.map(|m| m + 1) },
        PQTerm::QRR { k, l } => qrr(k + 1, *l),
        PQTerm::LeadingOp { .. } => return Err(PqError::Unsupported(t.to_string(), "nabla")),
    }]))
}

/// Derivative of a `Q` class without factors of `A`: there is nothing for
/// the derivative to raise `|i|` on, so it lands on `R̄` (raising `r`) or on
/// `DF` and the normal injections (producing a factor `A`). The result is
/// a subclass of the rule2 image.
pub fn nabla_curvature_only(t: &PQTerm) -> Result<PQTerm, PqError> {
    match t {
        PQTerm::Q { k: 0, l: 0, m } => Ok(PQTerm::Q { k: 0, l: 1, m: m.map(|m| m + 1) }),
        _ => Err(PqError::Unsupported(t.to_string(), "nabla_curvature_only")),
    }
}

/// rule3 and its analogue for `P` and `QRR`: one more factor of `A`.
pub fn contract_a(t: &PQTerm) -> Result<PQTerm, PqError> {
    Ok(match t {
        PQTerm::P { k, l } => p(*k, l + 1),
        PQTerm::Q { k, l, m } => PQTerm::Q { k: *k, l: l + 1, m: *m },
        PQTerm::QRR { k, l } => qrr(*k, l + 1),
        PQTerm::LeadingOp { .. } => return Err(PqError::Unsupported(t.to_string(), "contract_A")),
    })
}

/// Contraction of two classes.
pub fn product(a: &PQTerm, b: &PQTerm) -> Result<PQTerm, PqError> {
    use PQTerm::*;
    Ok(match (a, b) {
        (P { k, l }, P { k: k2, l: l2 }) => p(k + k2, l + l2),
        (Q { k, l, m }, P { k: k2, l: l2 }) | (P { k: k2, l: l2 }, Q { k, l, m }) => Q { k: k + k2, l: l + l2, m: *m },
        (QRR { k, l }, P { k: k2, l: l2 }) | (P { k: k2, l: l2 }, QRR { k, l }) => qrr(k + k2, l + l2),
        (Q { k, l, .. }, Q { k: k2, l: l2, .. }) => qrr(k + k2, l + l2),
        _ => return Err(PqError::Unsupported(format!("{a} * {b}"), "product")),
    })
}

/// Trace of a scripted derivation and its result.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivation {
    pub trace: Vec<String>,
    pub result: PQSum,
}

impl Derivation {
    pub fn trace_text(&self) -> String {
        self.trace.join("\n")
    }
}

struct Script {
    flat: bool,
    trace: Vec<String>,
}

impl Script {
    fn new(title: &str, flat: bool) -> Self {
        let mut trace = vec![title.to_string()];
        if flat {
            trace.push("  mode: flat ambient, every Q term vanishes".into());
        }
        Script { flat, trace }
    }

    fn note(&mut self, rule: &str, text: impl AsRef<str>) {
        self.trace.push(format!("  [{rule}] {}", text.as_ref()));
    }

    fn fail(&self, msg: String) -> PqError {
        PqError::Derivation { msg, trace: self.trace.join("\n") }
    }

    /// Records `t` unless it involves the ambient curvature in flat mode.
    fn keep(&self, out: &mut PQSum, t: PQTerm) {
        if !(self.flat && t.involves_ambient()) {
            out.push(t);
        }
    }

    fn nabla_n(&mut self, t: &PQTerm, n: usize) -> Result<PQTerm, PqError> {
        let mut cur = t.clone();
        for _ in 0..n {
            let next = nabla(&cur)?.0.remove(0);
            let rule = if matches!(cur, PQTerm::P { .. }) { "rule1" } else { "rule2" };
            self.note(rule, format!("∇ {cur} = {next}"));
            cur = next;
        }
        Ok(cur)
    }

    fn contract(&mut self, t: &PQTerm) -> Result<PQTerm, PqError> {
        let r = contract_a(t)?;
        self.note("rule3", format!("{t} * A = {r}"));
        Ok(r)
    }

    fn times(&mut self, a: &PQTerm, b: &PQTerm) -> Result<PQTerm, PqError> {
        let r = product(a, b)?;
        self.note("product", format!("{a} * {b} = {r}"));
        Ok(r)
    }

    /// Asserts the expression is homogeneous of weight `g`.
    fn check_grade(&mut self, what: &str, s: &PQSum, g: u32) -> Result<(), PqError> {
        if let Some(bad) = s.terms().iter().find(|t| t.grade() != g) {
            return Err(self.fail(format!("{what}: {bad} has weight {} instead of {g}", bad.grade())));
        }
        self.note("grade", format!("{what} {s} is homogeneous of weight {g}"));
        Ok(())
    }

    fn absorb(&mut self, s: &PQSum) -> PQSum {
        let n = s.normalize();
        self.note("absorb", format!("{s} = {n}"));
        n
    }

    fn finish(self, result: PQSum) -> Derivation {
        let mut trace = self.trace;
        trace.push(format!("  result: {result}"));
        Derivation { trace, result }
    }
}

/// Curvature of the surface by the Gauss equation: `A * A + R̄`.
fn surface_curvature(s: &Script) -> Vec<PQTerm> {
    if s.flat {
        vec![p(0, 2)]
    } else {
        vec![p(0, 2), q(0, 0, 0)]
    }
}

fn commutator_2(s: &mut Script) -> Result<PQSum, PqError> {
    let mut out = PQSum::default();
    s.note("start", "∇²_ab A_pq = ∇_a (∇_b A_pq)");
    let codazzi = q(0, 0, 0);
    let tail = if s.flat { String::new() } else { format!(" + {codazzi}") };
    s.note("codazzi", format!("∇_b A_pq = ∇_p A_bq{tail}"));
    if !s.flat {
        let t = nabla_curvature_only(&codazzi)?;
        s.note(
            "rule2",
            format!("∇_a {codazzi} = {t}, a subclass of {} since no factor A is present", nabla(&codazzi)?),
        );
        s.keep(&mut out, t);
    }
    let rm = if s.flat { "A * A" } else { "A * A + R̄" };
    s.note("ricci", format!("∇_a ∇_p A_qb = ∇_p ∇_a A_qb + Rm * A, Rm = {rm} by Gauss"));
    for r in surface_curvature(s) {
        let t = s.contract(&r)?;
        s.keep(&mut out, t);
    }
    s.note("codazzi", format!("∇_a A_qb = ∇_q A_ab{tail}"));
    if !s.flat {
        let t = nabla_curvature_only(&codazzi)?;
        s.note("rule2", format!("∇_p {codazzi} = {t}"));
        s.keep(&mut out, t);
    }
    s.note("leading", "∇_p ∇_q A_ab = ∇²_pq A_ab");
    s.check_grade("corrections", &out, 3)?;
    Ok(s.absorb(&out))
}

fn commutator_4(s: &mut Script) -> Result<PQSum, PqError> {
    let mut out = PQSum::default();
    s.note("start", "∇_a ∇_b ∇_p ∇_q A_pq, moved to ∇_p ∇_q ∇_a ∇_b A_pq by four adjacent swaps");
    // (derivatives applied outside the swap, derivatives of A inside it)
    let swaps = [("b", "p", 1, 1), ("a", "p", 0, 2), ("b", "q", 2, 0), ("a", "q", 1, 1)];
    for (x, y, outer, inner) in swaps {
        s.note("ricci", format!("swap ∇_{x} ∇_{y}: ∇^{outer} (Rm * ∇^{inner} A)"));
        for r in surface_curvature(s) {
            let f = s.times(&r, &p(inner, 1))?;
            let t = s.nabla_n(&f, outer)?;
            s.keep(&mut out, t);
        }
    }
    s.check_grade("corrections", &out, 5)?;
    Ok(s.absorb(&out))
}

/// Correction terms in `∇²_ab A_pq = ∇²_pq A_ab + …`.
pub fn derive_commutator_2(flat: bool) -> Result<Derivation, PqError> {
    let mut s = Script::new("commutator ∇²_ab A_pq - ∇²_pq A_ab", flat);
    let r = commutator_2(&mut s)?;
    Ok(s.finish(r))
}

/// Correction terms in `∇²_ab ∇²_pq A_pq = ∇²_pq ∇²_ab A_pq + …`.
pub fn derive_commutator_4(flat: bool) -> Result<Derivation, PqError> {
    let mut s = Script::new("commutator ∇²_ab ∇²_pq A_pq - ∇²_pq ∇²_ab A_pq", flat);
    let r = commutator_4(&mut s)?;
    Ok(s.finish(r))
}

/// Structure of `∂ₜ A` along the flow, from the structure of the speed
/// `∂ₜ A = ∇²V + P(0,2) * V + Q(0,0,0) * V` and of the gradient
/// `V = g g ∇²A + P(0,3) + Q(0,1,0)`.
pub fn derive_evolution_structure(flat: bool) -> Result<Derivation, PqError> {
    let mut s = Script::new("evolution of A", flat);
    let lead = leading("g^ap g^bq ∇²_ab A_pq", 3);
    let mut v = PQSum::new([lead.clone(), p(0, 3)]);
    s.keep(&mut v, q(0, 1, 0));
    s.note("gradient", format!("V = {v}"));
    s.check_grade("V", &v, 3)?;
    let mut coeffs = PQSum::new([p(0, 2)]);
    s.keep(&mut coeffs, q(0, 0, 0));
    s.note("speed", format!("∂ₜ A_ij = ∇²_ij V + Σ c * V over c in {coeffs}"));

    let mut out = PQSum::default();
    s.note("substitute", "∇²_ij (g^ap g^bq ∇²_ab A_pq) kept for the commutators");
    for t in &v.0[1..] {
        let d = s.nabla_n(t, 2)?;
        out.push(d);
    }
    // the leading operator is a P(2,1) when multiplied out
    let lead_class = p(2, 1);
    s.note("class", format!("{lead} lies in {lead_class}"));
    for c in coeffs.terms() {
        for t in std::iter::once(&lead_class).chain(&v.0[1..]) {
            let r = s.times(c, t)?;
            out.push(r);
        }
    }

    s.note("commute4", "g^ap g^bq ∇²_ij ∇²_ab A_pq = g^ap g^bq ∇²_ab ∇²_ij A_pq + commutator corrections");
    let c4 = commutator_4(&mut s)?;
    out.extend(c4);
    s.note("commute2", "∇²_ij A_pq = ∇²_pq A_ij + commutator corrections, then g^ap g^bq ∇²_ab");
    let c2 = commutator_2(&mut s)?;
    for t in c2.terms() {
        let d = s.nabla_n(t, 2)?;
        out.push(d);
    }
    s.note("leading", "g^ap g^bq ∇²_ab ∇²_pq A_ij = Δ²A_ij");
    out.0.insert(0, leading("Δ²A", 5));
    let out = s.keep_all(out);
    s.check_grade("∂ₜ A", &out, 5)?;
    let r = s.absorb(&out);
    Ok(s.finish(r))
}

impl Script {
    fn keep_all(&self, s: PQSum) -> PQSum {
        if self.flat {
            s.drop_ambient()
        } else {
            s
        }
    }
}
