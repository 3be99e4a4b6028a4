//! Flat text serialization for problems and set descriptors.
//!
//! Problem files have three fixed sections plus an optional fourth:
//!
//! ```text
//! [map]
//! n = 2
//! row = <17-significant-digit scalars, space separated>   (n lines)
//! offset = <scalars>
//! [set]
//! <set descriptor>
//! [meta]
//! lipschitz = <scalar>
//! diameter = <scalar> | unknown
//! reference = <scalars> | none
//! alpha = <scalar> | none
//! [family]                       (optional)
//! weights = <scalars>
//! member = <set descriptor>      (one line per member)
//! ```
//!
//! Set descriptors are nested s-expressions:
//!
//! ```text
//! (box lo=(..) hi=(..))                  (inf / -inf bounds allowed)
//! (nonneg n=3)
//! (halfspace c=(..) b=..)                meaning cᵀy ≤ b
//! (hyperplane a=(..) b=..)               meaning aᵀy = b
//! (simplex n=2 r=..)
//! (halfspace-meet-hyperplane c=(..) cb=.. a=(..) ab=..)
//! (product (block idx=(0 2 5) <desc>) ...)
//! (dykstra tol=.. max=.. <desc> <desc> ...)
//! ```
//!
//! Scalars are printed with 17 significant digits (`{:.16e}`), which makes
//! the round trip bit-exact for finite doubles.

use crate::error::{Error, Result};
use crate::problem::{AffineMonotoneMap, ViProblem};
use crate::projections::{ConstraintFamily, ProductBlock, Projector};
use crate::scalar::Scalar;
use crate::{Matrix, Vector};

pub fn format_scalar<T: Scalar>(v: T) -> String {
    if v == T::infinity() {
        "inf".to_string()
    } else if v == T::neg_infinity() {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_scalar<T: Scalar>(s: &str, line: usize) -> Result<T> {
    match s {
        "inf" => Ok(T::infinity()),
        "-inf" => Ok(T::neg_infinity()),
        _ => s.parse::<T>().map_err(|e| Error::Parse {
            line,
            msg: format!("bad scalar '{s}': {e}"),
        }),
    }
}

fn format_vector<T: Scalar>(v: &Vector<T>) -> String {
    v.iter()
        .map(|x| format_scalar(*x))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_vector<T: Scalar>(s: &str, line: usize) -> Result<Vector<T>> {
    let vals: Result<Vec<T>> = s
        .split_whitespace()
        .map(|tok| parse_scalar(tok, line))
        .collect();
    Ok(Vector::from_vec(vals?))
}

// ---------------------------------------------------------------------------
// set descriptor s-expressions

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(Token::Atom(std::mem::take(&mut cur)));
                }
                out.push(if ch == '(' { Token::Open } else { Token::Close });
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(Token::Atom(std::mem::take(&mut cur)));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(Token::Atom(cur));
    }
    out
}

struct Cursor<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of descriptor"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_open(&mut self) -> Result<()> {
        match self.next()? {
            Token::Open => Ok(()),
            t => Err(self.err(format!("expected '(', got {t:?}"))),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next()? {
            Token::Close => Ok(()),
            t => Err(self.err(format!("expected ')', got {t:?}"))),
        }
    }

    fn atom(&mut self) -> Result<String> {
        match self.next()? {
            Token::Atom(s) => Ok(s),
            t => Err(self.err(format!("expected atom, got {t:?}"))),
        }
    }

    /// `key=value` for a single scalar-ish value.
    fn kv(&mut self, key: &str) -> Result<String> {
        let a = self.atom()?;
        let (k, v) = a
            .split_once('=')
            .ok_or_else(|| self.err(format!("expected {key}=<value>, got '{a}'")))?;
        if k != key {
            return Err(self.err(format!("expected key '{key}', got '{k}'")));
        }
        if v.is_empty() {
            return Err(self.err(format!("key '{key}' needs an inline value")));
        }
        Ok(v.to_string())
    }

    /// `key=( v v v )` for a vector value.
    fn kv_vector<T: Scalar>(&mut self, key: &str) -> Result<Vector<T>> {
        let a = self.atom()?;
        if a != format!("{key}=") {
            return Err(self.err(format!("expected {key}=(...), got '{a}'")));
        }
        self.expect_open()?;
        let mut vals = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Close) => {
                    self.pos += 1;
                    break;
                }
                Some(Token::Atom(_)) => {
                    let s = self.atom()?;
                    vals.push(parse_scalar::<T>(&s, self.line)?);
                }
                other => return Err(self.err(format!("bad vector token {other:?}"))),
            }
        }
        Ok(Vector::from_vec(vals))
    }

    fn kv_indices(&mut self, key: &str) -> Result<Vec<usize>> {
        let a = self.atom()?;
        if a != format!("{key}=") {
            return Err(self.err(format!("expected {key}=(...), got '{a}'")));
        }
        self.expect_open()?;
        let mut vals = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Close) => {
                    self.pos += 1;
                    break;
                }
                Some(Token::Atom(_)) => {
                    let s = self.atom()?;
                    vals.push(s.parse::<usize>().map_err(|e| {
                        self.err(format!("bad index '{s}': {e}"))
                    })?);
                }
                other => return Err(self.err(format!("bad index token {other:?}"))),
            }
        }
        Ok(vals)
    }
}

/// Renders a set descriptor on one line.
pub fn write_projector<T: Scalar>(p: &Projector<T>) -> String {
    match p {
        Projector::Box { lo, hi } => {
            format!("(box lo=({}) hi=({}))", format_vector(lo), format_vector(hi))
        }
        Projector::Nonneg { dim } => format!("(nonneg n={dim})"),
        Projector::Halfspace { normal, rhs } => format!(
            "(halfspace c=({}) b={})",
            format_vector(normal),
            format_scalar(*rhs)
        ),
        Projector::Hyperplane { normal, rhs } => format!(
            "(hyperplane a=({}) b={})",
            format_vector(normal),
            format_scalar(*rhs)
        ),
        Projector::Simplex { dim, radius } => {
            format!("(simplex n={dim} r={})", format_scalar(*radius))
        }
        Projector::HalfspaceMeetHyperplane {
            half_normal,
            half_rhs,
            plane_normal,
            plane_rhs,
        } => format!(
            "(halfspace-meet-hyperplane c=({}) cb={} a=({}) ab={})",
            format_vector(half_normal),
            format_scalar(*half_rhs),
            format_vector(plane_normal),
            format_scalar(*plane_rhs)
        ),
        Projector::Product { blocks } => {
            let inner: Vec<String> = blocks
                .iter()
                .map(|b| {
                    let idx: Vec<String> = b.indices.iter().map(|i| i.to_string()).collect();
                    format!("(block idx=({}) {})", idx.join(" "), write_projector(&b.projector))
                })
                .collect();
            format!("(product {})", inner.join(" "))
        }
        Projector::PolyhedronMeetHyperplane {
            normals,
            offsets,
            plane_normal,
            plane_rhs,
        } => {
            let flat: Vec<String> = normals.iter().map(|v| format_scalar(*v)).collect();
            format!(
                "(polyhedron-meet-hyperplane m={} n={} normals=({}) offsets=({}) a=({}) ab={})",
                normals.nrows(),
                normals.ncols(),
                flat.join(" "),
                format_vector(offsets),
                format_vector(plane_normal),
                format_scalar(*plane_rhs)
            )
        }
        Projector::DykstraIntersection {
            members,
            tol,
            max_iters,
        } => {
            let inner: Vec<String> = members.iter().map(write_projector).collect();
            format!(
                "(dykstra tol={} max={max_iters} {})",
                format_scalar(*tol),
                inner.join(" ")
            )
        }
    }
}

/// Parses a one-line set descriptor.
pub fn parse_projector<T: Scalar>(s: &str) -> Result<Projector<T>> {
    parse_projector_at(s, 0)
}

fn parse_projector_at<T: Scalar>(s: &str, line: usize) -> Result<Projector<T>> {
    let tokens = tokenize(s);
    let mut cur = Cursor {
        tokens: &tokens,
        pos: 0,
        line,
    };
    let p = parse_desc(&mut cur)?;
    if cur.pos != tokens.len() {
        return Err(cur.err("trailing tokens after descriptor"));
    }
    Ok(p)
}

fn parse_desc<T: Scalar>(cur: &mut Cursor) -> Result<Projector<T>> {
    cur.expect_open()?;
    let head = cur.atom()?;
    let p = match head.as_str() {
        "box" => {
            let lo = cur.kv_vector::<T>("lo")?;
            let hi = cur.kv_vector::<T>("hi")?;
            Projector::boxed(lo, hi)?
        }
        "nonneg" => {
            let n = cur.kv("n")?;
            Projector::Nonneg {
                dim: n.parse().map_err(|e| cur.err(format!("bad n: {e}")))?,
            }
        }
        "halfspace" => {
            let normal = cur.kv_vector::<T>("c")?;
            let rhs = parse_scalar(&cur.kv("b")?, cur.line)?;
            Projector::Halfspace { normal, rhs }
        }
        "hyperplane" => {
            let normal = cur.kv_vector::<T>("a")?;
            let rhs = parse_scalar(&cur.kv("b")?, cur.line)?;
            Projector::hyperplane(normal, rhs)?
        }
        "simplex" => {
            let n: usize = cur
                .kv("n")?
                .parse()
                .map_err(|e| cur.err(format!("bad n: {e}")))?;
            let r = parse_scalar(&cur.kv("r")?, cur.line)?;
            Projector::simplex(n, r)?
        }
        "halfspace-meet-hyperplane" => {
            let half_normal = cur.kv_vector::<T>("c")?;
            let half_rhs = parse_scalar(&cur.kv("cb")?, cur.line)?;
            let plane_normal = cur.kv_vector::<T>("a")?;
            let plane_rhs = parse_scalar(&cur.kv("ab")?, cur.line)?;
            Projector::HalfspaceMeetHyperplane {
                half_normal,
                half_rhs,
                plane_normal,
                plane_rhs,
            }
        }
        "product" => {
            let mut blocks = Vec::new();
            while matches!(cur.peek(), Some(Token::Open)) {
                cur.expect_open()?;
                let tag = cur.atom()?;
                if tag != "block" {
                    return Err(cur.err(format!("expected block, got '{tag}'")));
                }
                let indices = cur.kv_indices("idx")?;
                let projector = parse_desc(cur)?;
                cur.expect_close()?;
                blocks.push(ProductBlock { indices, projector });
            }
            Projector::Product { blocks }
        }
        "polyhedron-meet-hyperplane" => {
            let m: usize = cur
                .kv("m")?
                .parse()
                .map_err(|e| cur.err(format!("bad m: {e}")))?;
            let n: usize = cur
                .kv("n")?
                .parse()
                .map_err(|e| cur.err(format!("bad n: {e}")))?;
            let flat = cur.kv_vector::<T>("normals")?;
            if flat.len() != m * n {
                return Err(cur.err(format!(
                    "normals has {} entries, expected {}",
                    flat.len(),
                    m * n
                )));
            }
            let normals = Matrix::from_shape_fn((m, n), |(i, j)| flat[i * n + j]);
            let offsets = cur.kv_vector::<T>("offsets")?;
            let plane_normal = cur.kv_vector::<T>("a")?;
            let plane_rhs = parse_scalar(&cur.kv("ab")?, cur.line)?;
            Projector::polyhedron_meet_hyperplane(normals, offsets, plane_normal, plane_rhs)?
        }
        "dykstra" => {
            let tol = parse_scalar(&cur.kv("tol")?, cur.line)?;
            let max_iters: usize = cur
                .kv("max")?
                .parse()
                .map_err(|e| cur.err(format!("bad max: {e}")))?;
            let mut members = Vec::new();
            while matches!(cur.peek(), Some(Token::Open)) {
                members.push(parse_desc(cur)?);
            }
            Projector::DykstraIntersection {
                members,
                tol,
                max_iters,
            }
        }
        other => return Err(cur.err(format!("unknown set kind '{other}'"))),
    };
    cur.expect_close()?;
    Ok(p)
}

// ---------------------------------------------------------------------------
// problem files

/// Serializes a problem (map, set, metadata, optional constraint family).
pub fn write_problem<T: Scalar>(problem: &ViProblem<T>) -> String {
    let mut out = String::new();
    let map = problem.map();
    out.push_str("[map]\n");
    out.push_str(&format!("n = {}\n", map.dim()));
    for i in 0..map.dim() {
        let row = Vector::from_shape_fn(map.dim(), |j| map.matrix()[[i, j]]);
        out.push_str(&format!("row = {}\n", format_vector(&row)));
    }
    out.push_str(&format!("offset = {}\n", format_vector(map.offset())));
    out.push_str("[set]\n");
    out.push_str(&write_projector(problem.feasible_set()));
    out.push('\n');
    out.push_str("[meta]\n");
    out.push_str(&format!(
        "lipschitz = {}\n",
        format_scalar(problem.lipschitz())
    ));
    match problem.diameter_bound() {
        Some(d) => out.push_str(&format!("diameter = {}\n", format_scalar(d))),
        None => out.push_str("diameter = unknown\n"),
    }
    match problem.reference_solution() {
        Some(r) => out.push_str(&format!("reference = {}\n", format_vector(r))),
        None => out.push_str("reference = none\n"),
    }
    match problem.weak_sharpness_alpha() {
        Some(a) => out.push_str(&format!("alpha = {}\n", format_scalar(a))),
        None => out.push_str("alpha = none\n"),
    }
    if let Some(family) = problem.constraint_family() {
        out.push_str("[family]\n");
        let w = Vector::from_vec(family.weights().to_vec());
        out.push_str(&format!("weights = {}\n", format_vector(&w)));
        for m in family.members() {
            out.push_str(&format!("member = {}\n", write_projector(m)));
        }
    }
    out
}

fn expect_kv_line<'a>(line: &'a str, key: &str, lineno: usize) -> Result<&'a str> {
    let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
        line: lineno,
        msg: format!("expected '{key} = ...'"),
    })?;
    if k.trim() != key {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected key '{key}', got '{}'", k.trim()),
        });
    }
    Ok(v.trim())
}

/// Parses a problem file; the reference solution, when present, is
/// re-validated for feasibility.
pub fn parse_problem<T: Scalar>(text: &str) -> Result<ViProblem<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut need = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };

    let (lineno, header) = need("[map]")?;
    if header != "[map]" {
        return Err(Error::Parse {
            line: lineno,
            msg: "expected [map]".into(),
        });
    }
    let (lineno, nline) = need("n")?;
    let n: usize = expect_kv_line(nline, "n", lineno)?
        .parse()
        .map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad n: {e}"),
        })?;
    let mut matrix = Matrix::<T>::zeros((n, n));
    for i in 0..n {
        let (lineno, row) = need("row")?;
        let vals = parse_vector::<T>(expect_kv_line(row, "row", lineno)?, lineno)?;
        if vals.len() != n {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("row has {} entries, expected {n}", vals.len()),
            });
        }
        for j in 0..n {
            matrix[[i, j]] = vals[j];
        }
    }
    let (lineno, off) = need("offset")?;
    let offset = parse_vector::<T>(expect_kv_line(off, "offset", lineno)?, lineno)?;
    let map = AffineMonotoneMap::new(matrix, offset)?;

    let (lineno, header) = need("[set]")?;
    if header != "[set]" {
        return Err(Error::Parse {
            line: lineno,
            msg: "expected [set]".into(),
        });
    }
    let (lineno, desc) = need("set descriptor")?;
    let set = parse_projector_at::<T>(desc, lineno)?;

    let (lineno, header) = need("[meta]")?;
    if header != "[meta]" {
        return Err(Error::Parse {
            line: lineno,
            msg: "expected [meta]".into(),
        });
    }
    let (lineno, lip) = need("lipschitz")?;
    let lipschitz = parse_scalar::<T>(expect_kv_line(lip, "lipschitz", lineno)?, lineno)?;
    let (lineno, diam) = need("diameter")?;
    let diam = expect_kv_line(diam, "diameter", lineno)?;
    let diameter = if diam == "unknown" {
        None
    } else {
        Some(parse_scalar::<T>(diam, lineno)?)
    };
    let (lineno, rf) = need("reference")?;
    let rf = expect_kv_line(rf, "reference", lineno)?;
    let reference = if rf == "none" {
        None
    } else {
        Some(parse_vector::<T>(rf, lineno)?)
    };
    let (lineno, al) = need("alpha")?;
    let al = expect_kv_line(al, "alpha", lineno)?;
    let alpha = if al == "none" {
        None
    } else {
        Some(parse_scalar::<T>(al, lineno)?)
    };

    let mut problem = ViProblem::new(map, set, lipschitz)?;
    if let Some(d) = diameter {
        problem = problem.with_diameter_bound(d);
    }
    if let Some(a) = alpha {
        problem = problem.with_weak_sharpness_alpha(a);
    }
    if let Some(r) = reference {
        problem = problem.with_reference_feasible(r)?;
    }

    if let Some((lineno, header)) = lines.next() {
        if header != "[family]" {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("unexpected section '{header}'"),
            });
        }
        let (lineno, w) = lines.next().ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "family needs weights".into(),
        })?;
        let weights = parse_vector::<T>(expect_kv_line(w, "weights", lineno)?, lineno)?;
        let mut members = Vec::new();
        for (lineno, l) in lines {
            let desc = expect_kv_line(l, "member", lineno)?;
            members.push(parse_projector_at::<T>(desc, lineno)?);
        }
        let family = ConstraintFamily::new(
            members,
            weights.to_vec(),
            problem.feasible_set().clone(),
        )?;
        problem = problem.with_family(family);
    }
    Ok(problem)
}

/// Parses a whitespace-separated list of scalars (a point file).
pub fn parse_point<T: Scalar>(text: &str) -> Result<Vector<T>> {
    let vals: Result<Vec<T>> = text
        .split_whitespace()
        .map(|tok| parse_scalar(tok, 0))
        .collect();
    let v = Vector::from_vec(vals?);
    if v.is_empty() {
        return Err(Error::invalid("point file holds no values"));
    }
    Ok(v)
}

/// Renders a point, one scalar per line.
pub fn write_point<T: Scalar>(v: &Vector<T>) -> String {
    v.iter()
        .map(|x| format_scalar(*x))
        .collect::<Vec<_>>()
        .join("\n")
}
