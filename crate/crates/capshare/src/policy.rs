//! Monotone access policies: formula text, linear secret sharing matrices,
//! and share reconstruction.
//!
//! Formulas use `AND`/`OR` with parentheses, `AND` binding tighter. Compilation
//! labels the tree top-down: the root starts with vector (1) and a width
//! counter of 1; an `OR` node copies its vector to both children; an `AND`
//! node gives the left child the vector zero-padded to the current width with
//! 1 appended, the right child the all-zero vector with -1 appended, and grows
//! the width. Leaf vectors, zero-padded to the final width, become the matrix
//! rows in leaf order. A set of attributes satisfies the policy exactly when
//! the rows it selects span (1, 0, ..., 0); reconstruction finds coefficients
//! by Gaussian elimination over the scalar field, eliminating in ascending row
//! order with free variables pinned to zero.

use crate::groups::Scalar;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Hard cap on matrix rows a single policy may compile to.
pub const MAX_ROWS: usize = 512;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("policy has {0} leaves, the limit is {MAX_ROWS}")]
    TooLarge(usize),
    #[error("attribute set does not satisfy the policy")]
    NotSatisfied,
}

/// Set of attribute names, deduplicated and ordered.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttributeSet(BTreeSet<String>);

impl AttributeSet {
    pub fn new() -> Self {
        AttributeSet(BTreeSet::new())
    }

    pub fn insert(&mut self, name: impl Into<String>) {
        self.0.insert(name.into());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for AttributeSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        AttributeSet(iter.into_iter().map(Into::into).collect())
    }
}

/// Parsed monotone boolean formula over attribute names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Leaf(String),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Boolean evaluation; the independent reference for [`satisfies`].
    pub fn eval(&self, attrs: &AttributeSet) -> bool {
        match self {
            Formula::Leaf(a) => attrs.contains(a),
            Formula::And(l, r) => l.eval(attrs) && r.eval(attrs),
            Formula::Or(l, r) => l.eval(attrs) || r.eval(attrs),
        }
    }

    /// Leaf names in left-to-right order, with repeats.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::Leaf(a) => out.push(a),
            Formula::And(l, r) | Formula::Or(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    // Parenthesize where reparsing would otherwise change the tree: OR under
    // AND always, and any right child of its own operator (the parser builds
    // left-associative chains).
    fn needs_parens(&self, parent_is_and: bool, is_right: bool) -> bool {
        match self {
            Formula::Leaf(_) => false,
            Formula::And(..) => parent_is_and && is_right,
            Formula::Or(..) => parent_is_and || is_right,
        }
    }

    fn fmt_child(
        &self,
        f: &mut fmt::Formatter<'_>,
        parent_is_and: bool,
        is_right: bool,
    ) -> fmt::Result {
        if self.needs_parens(parent_is_and, is_right) {
            f.write_str("(")?;
            self.fmt_prec(f)?;
            f.write_str(")")
        } else {
            self.fmt_prec(f)
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Leaf(a) => f.write_str(a),
            Formula::And(l, r) => {
                l.fmt_child(f, true, false)?;
                f.write_str(" AND ")?;
                r.fmt_child(f, true, true)
            }
            Formula::Or(l, r) => {
                l.fmt_child(f, false, false)?;
                f.write_str(" OR ")?;
                r.fmt_child(f, false, true)
            }
        }
    }
}

impl fmt::Display for Formula {
    /// Minimal-parentheses text that parses back to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f)
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Ident(String),
    And,
    Or,
    LParen,
    RParen,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '@' | '/' | '#')
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, PolicyError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
        } else if c == '(' {
            it.next();
            out.push((Token::LParen, i));
        } else if c == ')' {
            it.next();
            out.push((Token::RParen, i));
        } else if is_ident_char(c) {
            let mut word = String::new();
            while let Some(&(_, c)) = it.peek() {
                if is_ident_char(c) {
                    word.push(c);
                    it.next();
                } else {
                    break;
                }
            }
            let tok = match word.as_str() {
                "AND" => Token::And,
                "OR" => Token::Or,
                _ => Token::Ident(word),
            };
            out.push((tok, i));
        } else {
            return Err(PolicyError::Syntax {
                offset: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> PolicyError {
        PolicyError::Syntax {
            offset: self.offset(),
            msg: msg.into(),
        }
    }

    // expr := term (OR term)*
    fn expr(&mut self) -> Result<Formula, PolicyError> {
        let mut node = self.term()?;
        while matches!(self.peek(), Some((Token::Or, _))) {
            self.pos += 1;
            let rhs = self.term()?;
            node = Formula::Or(Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    // term := factor (AND factor)*
    fn term(&mut self) -> Result<Formula, PolicyError> {
        let mut node = self.factor()?;
        while matches!(self.peek(), Some((Token::And, _))) {
            self.pos += 1;
            let rhs = self.factor()?;
            node = Formula::And(Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    // factor := IDENT | '(' expr ')'
    fn factor(&mut self) -> Result<Formula, PolicyError> {
        match self.peek() {
            Some((Token::Ident(_), _)) => {
                let Some((Token::Ident(name), _)) = self.tokens.get(self.pos) else {
                    unreachable!()
                };
                let leaf = Formula::Leaf(name.clone());
                self.pos += 1;
                Ok(leaf)
            }
            Some((Token::LParen, _)) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some((Token::RParen, _)) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some((Token::And, _)) | Some((Token::Or, _)) => {
                Err(self.err("expected attribute or `(`"))
            }
            Some((Token::RParen, _)) => Err(self.err("unexpected `)`")),
            None => Err(self.err("unexpected end of formula")),
        }
    }
}

/// Parses policy text. Errors carry the byte offset of the offending token.
pub fn parse_formula(text: &str) -> Result<Formula, PolicyError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let f = p.expr()?;
    if let Some((_, o)) = p.peek() {
        return Err(PolicyError::Syntax {
            offset: *o,
            msg: "trailing input after formula".into(),
        });
    }
    Ok(f)
}

/// Share-generating matrix with its row labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsssPolicy {
    formula: Formula,
    matrix: Vec<Vec<Scalar>>,
    row_attrs: Vec<String>,
    reuse_index: Vec<usize>,
    reuse_bound: usize,
}

impl LsssPolicy {
    /// Number of matrix rows (one per formula leaf).
    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    /// Matrix width.
    pub fn cols(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn matrix(&self) -> &[Vec<Scalar>] {
        &self.matrix
    }

    /// Attribute name labeling row `i`.
    pub fn row_attr(&self, i: usize) -> &str {
        &self.row_attrs[i]
    }

    pub fn row_attrs(&self) -> &[String] {
        &self.row_attrs
    }

    /// For each row, which occurrence of its attribute this is (1-based).
    pub fn reuse_index(&self) -> &[usize] {
        &self.reuse_index
    }

    /// Maximum attribute reuse across the policy.
    pub fn reuse_bound(&self) -> usize {
        self.reuse_bound
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    /// Canonical formula text; recompiling it reproduces this policy.
    pub fn source(&self) -> String {
        self.formula.to_string()
    }

    /// Deterministic dump for fixture comparison.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(
            out,
            "policy {}x{} reuse_bound={}",
            self.rows(),
            self.cols(),
            self.reuse_bound
        )
        .unwrap();
        for i in 0..self.rows() {
            write!(out, "row {} attr={} occ={} [", i + 1, self.row_attrs[i], self.reuse_index[i])
                .unwrap();
            for (j, v) in self.matrix[i].iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&fmt_coef(v));
            }
            out.push_str("]\n");
        }
        out
    }
}

fn fmt_coef(v: &Scalar) -> String {
    if v.is_zero() {
        return "0".into();
    }
    for k in 1..=16u64 {
        if *v == Scalar::from_u64(k) {
            return k.to_string();
        }
        if *v == -Scalar::from_u64(k) {
            return format!("-{k}");
        }
    }
    hex::encode(v.to_bytes())
}

/// Compiles a formula to its share-generating matrix.
pub fn compile_lsss(formula: &Formula) -> Result<LsssPolicy, PolicyError> {
    let leaves = formula.leaves().len();
    if leaves > MAX_ROWS {
        return Err(PolicyError::TooLarge(leaves));
    }

    let mut width = 1usize;
    let mut rows: Vec<(String, Vec<i8>)> = Vec::with_capacity(leaves);
    label(formula, vec![1], &mut width, &mut rows);

    let matrix: Vec<Vec<Scalar>> = rows
        .iter()
        .map(|(_, v)| {
            let mut row: Vec<Scalar> = v.iter().map(|&x| coef(x)).collect();
            row.resize(width, Scalar::zero());
            row
        })
        .collect();
    let row_attrs: Vec<String> = rows.into_iter().map(|(a, _)| a).collect();

    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut reuse_index = Vec::with_capacity(row_attrs.len());
    for a in &row_attrs {
        let occ = seen.entry(a.as_str()).or_insert(0);
        *occ += 1;
        reuse_index.push(*occ);
    }
    let reuse_bound = reuse_index.iter().copied().max().unwrap_or(1);

    Ok(LsssPolicy {
        formula: formula.clone(),
        matrix,
        row_attrs,
        reuse_index,
        reuse_bound,
    })
}

fn coef(x: i8) -> Scalar {
    match x {
        0 => Scalar::zero(),
        1 => Scalar::one(),
        -1 => -Scalar::one(),
        _ => unreachable!("labeling only emits 0 and +-1"),
    }
}

fn label(node: &Formula, vec: Vec<i8>, width: &mut usize, rows: &mut Vec<(String, Vec<i8>)>) {
    match node {
        Formula::Leaf(a) => rows.push((a.clone(), vec)),
        Formula::Or(l, r) => {
            label(l, vec.clone(), width, rows);
            label(r, vec, width, rows);
        }
        Formula::And(l, r) => {
            let mut left = vec;
            left.resize(*width, 0);
            left.push(1);
            let mut right = vec![0i8; *width];
            right.push(-1);
            *width += 1;
            label(l, left, width, rows);
            label(r, right, width, rows);
        }
    }
}

/// Rows selected by an attribute set, with the nonzero coefficient for each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconPlan {
    /// (row index, coefficient), ascending by row, zero coefficients dropped.
    pub entries: Vec<(usize, Scalar)>,
}

/// Whether the attribute set selects rows spanning the reconstruction target.
pub fn satisfies(policy: &LsssPolicy, attrs: &AttributeSet) -> bool {
    let selected = selected_rows(policy, attrs);
    solve(policy, &selected).is_some()
}

/// Reconstruction coefficients for a satisfying set.
pub fn recon_coefficients(
    policy: &LsssPolicy,
    attrs: &AttributeSet,
) -> Result<ReconPlan, PolicyError> {
    let selected = selected_rows(policy, attrs);
    let x = solve(policy, &selected).ok_or(PolicyError::NotSatisfied)?;
    let entries = selected
        .iter()
        .zip(&x)
        .filter(|(_, c)| !c.is_zero())
        .map(|(&r, &c)| (r, c))
        .collect();
    Ok(ReconPlan { entries })
}

fn selected_rows(policy: &LsssPolicy, attrs: &AttributeSet) -> Vec<usize> {
    (0..policy.rows())
        .filter(|&i| attrs.contains(policy.row_attr(i)))
        .collect()
}

/// Solves x^T M_sel = (1, 0, ..., 0) by elimination in ascending selected-row
/// order, free variables zero. Returns one coefficient per selected row.
fn solve(policy: &LsssPolicy, selected: &[usize]) -> Option<Vec<Scalar>> {
    let k = selected.len();
    if k == 0 {
        return None;
    }
    let n2 = policy.cols();
    // augmented system M_sel^T x = e1: n2 equations, k unknowns
    let mut a = vec![vec![Scalar::zero(); k + 1]; n2];
    for (col, &ri) in selected.iter().enumerate() {
        for (r, v) in policy.matrix[ri].iter().enumerate() {
            a[r][col] = *v;
        }
    }
    a[0][k] = Scalar::one();

    let mut pivot_row_of = vec![None; k];
    let mut next = 0usize;
    for col in 0..k {
        if next == n2 {
            break;
        }
        let Some(pr) = (next..n2).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(next, pr);
        let inv = a[next][col].inverse().expect("pivot nonzero");
        for c in col..=k {
            a[next][c] = a[next][c] * inv;
        }
        for r in 0..n2 {
            if r != next && !a[r][col].is_zero() {
                let f = a[r][col];
                for c in col..=k {
                    a[r][c] = a[r][c] - f * a[next][c];
                }
            }
        }
        pivot_row_of[col] = Some(next);
        next += 1;
    }

    // inconsistent system: a zero equation with nonzero right-hand side
    for r in 0..n2 {
        if !a[r][k].is_zero() && (0..k).all(|c| a[r][c].is_zero()) {
            return None;
        }
    }

    let mut x = vec![Scalar::zero(); k];
    for col in 0..k {
        if let Some(pr) = pivot_row_of[col] {
            x[col] = a[pr][k];
        }
    }

    debug_assert!({
        let mut acc = vec![Scalar::zero(); n2];
        for (col, &ri) in selected.iter().enumerate() {
            for (j, v) in policy.matrix[ri].iter().enumerate() {
                acc[j] = acc[j] + x[col] * *v;
            }
        }
        acc[0] == Scalar::one() && acc[1..].iter().all(|v| v.is_zero())
    });

    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn set(names: &[&str]) -> AttributeSet {
        names.iter().copied().collect()
    }

    fn m(policy: &LsssPolicy) -> Vec<Vec<i64>> {
        policy
            .matrix()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| {
                        if v.is_zero() {
                            0
                        } else if *v == Scalar::one() {
                            1
                        } else if *v == -Scalar::one() {
                            -1
                        } else {
                            panic!("unexpected coefficient")
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn and_matrix_matches_hand_derivation() {
        let p = compile_lsss(&parse_formula("A AND B").unwrap()).unwrap();
        assert_eq!(m(&p), vec![vec![1, 1], vec![0, -1]]);
        assert_eq!(p.row_attrs(), &["A".to_string(), "B".to_string()]);
        assert_eq!(p.reuse_index(), &[1, 1]);
        assert_eq!(p.reuse_bound(), 1);
    }

    #[test]
    fn or_matrix_matches_hand_derivation() {
        let p = compile_lsss(&parse_formula("A OR B").unwrap()).unwrap();
        assert_eq!(m(&p), vec![vec![1], vec![1]]);
        assert_eq!(p.reuse_bound(), 1);
    }

    #[test]
    fn reused_attribute_gets_second_occurrence() {
        let p = compile_lsss(&parse_formula("(A OR B) AND A").unwrap()).unwrap();
        assert_eq!(m(&p), vec![vec![1, 1], vec![1, 1], vec![0, -1]]);
        assert_eq!(p.row_attrs(), &["A", "B", "A"]);
        assert_eq!(p.reuse_index(), &[1, 1, 2]);
        assert_eq!(p.reuse_bound(), 2);
    }

    #[test]
    fn nested_matrix_matches_hand_derivation() {
        // root AND splits (1) into (1,1) and (0,-1); the left AND then splits
        // (1,1) into (1,1,1) and (0,0,-1)
        let p = compile_lsss(&parse_formula("(A AND B) AND C").unwrap()).unwrap();
        assert_eq!(m(&p), vec![vec![1, 1, 1], vec![0, 0, -1], vec![0, -1, 0]]);
    }

    #[test]
    fn recon_on_or_picks_single_row() {
        let p = compile_lsss(&parse_formula("A OR B").unwrap()).unwrap();
        let plan = recon_coefficients(&p, &set(&["B"])).unwrap();
        assert_eq!(plan.entries, vec![(1, Scalar::one())]);
    }

    #[test]
    fn recon_on_and_uses_both_rows() {
        let p = compile_lsss(&parse_formula("A AND B").unwrap()).unwrap();
        let plan = recon_coefficients(&p, &set(&["A", "B"])).unwrap();
        assert_eq!(plan.entries, vec![(0, Scalar::one()), (1, Scalar::one())]);
        assert!(recon_coefficients(&p, &set(&["A"])).is_err());
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let f = parse_formula("A OR B AND C").unwrap();
        assert_eq!(
            f,
            Formula::Or(
                Box::new(Formula::Leaf("A".into())),
                Box::new(Formula::And(
                    Box::new(Formula::Leaf("B".into())),
                    Box::new(Formula::Leaf("C".into()))
                ))
            )
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_formula("A AND") {
            Err(PolicyError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_formula("(A OR B") {
            Err(PolicyError::Syntax { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_formula("A B") {
            Err(PolicyError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_formula("A && B") {
            Err(PolicyError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(parse_formula("").is_err());
    }

    fn random_formula(rng: &mut ChaCha20Rng, depth: usize, attrs: &[&str]) -> Formula {
        if depth == 0 || rng.gen_bool(0.4) {
            return Formula::Leaf(attrs[rng.gen_range(0..attrs.len())].to_string());
        }
        let l = Box::new(random_formula(rng, depth - 1, attrs));
        let r = Box::new(random_formula(rng, depth - 1, attrs));
        if rng.gen_bool(0.5) {
            Formula::And(l, r)
        } else {
            Formula::Or(l, r)
        }
    }

    #[test]
    fn satisfies_agrees_with_boolean_eval_exhaustively() {
        let attrs = ["A", "B", "C", "D", "E"];
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for _ in 0..60 {
            let f = random_formula(&mut rng, 3, &attrs);
            let p = compile_lsss(&f).unwrap();
            for mask in 0u32..(1 << attrs.len()) {
                let s: AttributeSet = attrs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| *a)
                    .collect();
                assert_eq!(
                    satisfies(&p, &s),
                    f.eval(&s),
                    "formula `{f}` set {s:?} disagree"
                );
            }
        }
    }

    #[test]
    fn recon_coefficients_are_boolean_for_formula_policies() {
        let attrs = ["A", "B", "C", "D"];
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        for _ in 0..60 {
            let f = random_formula(&mut rng, 3, &attrs);
            let p = compile_lsss(&f).unwrap();
            for mask in 0u32..(1 << attrs.len()) {
                let s: AttributeSet = attrs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| *a)
                    .collect();
                if let Ok(plan) = recon_coefficients(&p, &s) {
                    for (_, c) in &plan.entries {
                        assert_eq!(*c, Scalar::one(), "formula `{f}` produced a non-unit coefficient");
                    }
                }
            }
        }
    }

    #[test]
    fn display_round_trips() {
        let attrs = ["A", "B", "C", "D", "E", "F"];
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for _ in 0..100 {
            let f = random_formula(&mut rng, 4, &attrs);
            let text = f.to_string();
            assert_eq!(parse_formula(&text).unwrap(), f, "text `{text}`");
        }
    }

    #[test]
    fn dump_is_stable() {
        let p = compile_lsss(&parse_formula("(A OR B) AND A").unwrap()).unwrap();
        assert_eq!(
            p.dump(),
            "policy 3x2 reuse_bound=2\n\
             row 1 attr=A occ=1 [1 1]\n\
             row 2 attr=B occ=1 [1 1]\n\
             row 3 attr=A occ=2 [0 -1]\n"
        );
    }

    #[test]
    fn row_cap_enforced() {
        let mut text = String::from("A0");
        for i in 1..=MAX_ROWS {
            text.push_str(&format!(" OR A{i}"));
        }
        let f = parse_formula(&text).unwrap();
        assert!(matches!(compile_lsss(&f), Err(PolicyError::TooLarge(_))));
    }
}
