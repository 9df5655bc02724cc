//! Line-oriented problem files and the compact expressions used on the
//! command line.
//!
//! ```text
//! [domain]
//! kind = interval  a = 0  b = 1  n = 256
//! [g]
//! family = power_shift  alpha = 0.5  a0 = 1
//! [f]
//! family = const
//! [params]
//! lambda = 2  mu = 1  p = 2
//! [solver]            # optional
//! tol = 1e-10
//! ```
//!
//! Several `key = value` pairs may share a line; `#` starts a comment.
//! Lists are comma-separated (`s = 1, 2, 4`).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{fmt17, Bounds, DomainSpec};
use crate::nonlin::{FShape, FSpec, GSpec, Weight};
use crate::problem::{ProblemSpec, SolverOpts};

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub problem: ProblemSpec,
    pub opts: SolverOpts,
}

const SECTIONS: [&str; 5] = ["domain", "g", "f", "params", "solver"];

/// Key/value pairs of one section, each tagged with its line.
#[derive(Debug, Default)]
struct Section {
    header_line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn require(&mut self, name: &str, key: &str) -> Result<(usize, String)> {
        self.take(key).ok_or_else(|| Error::Parse {
            line: self.header_line,
            msg: format!("[{name}] is missing required key `{key}`"),
        })
    }

    fn number(&mut self, name: &str, key: &str) -> Result<f64> {
        let (line, v) = self.require(name, key)?;
        number(line, key, &v)
    }

    fn number_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some((line, v)) => number(line, key, &v),
            None => Ok(default),
        }
    }

    fn list(&mut self, name: &str, key: &str) -> Result<Vec<f64>> {
        let (line, v) = self.require(name, key)?;
        v.split(',').map(|item| number(line, key, item.trim())).collect()
    }

    /// Fails on any key no family consumed.
    fn finish(self, name: &str) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((key, (line, _))) => Err(Error::Parse { line, msg: format!("unknown key `{key}` in [{name}]") }),
            None => Ok(()),
        }
    }
}

fn number(line: usize, key: &str, text: &str) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, msg: format!("`{key}` expects a finite number, got `{text}`") }),
    }
}

fn count(line: usize, key: &str, text: &str) -> Result<usize> {
    text.parse::<usize>()
        .map_err(|_| Error::Parse { line, msg: format!("`{key}` expects a nonnegative integer, got `{text}`") })
}

/// Splits `a = 1  b=2 s = 1, 2` into pairs.
fn pairs(line_no: usize, text: &str) -> Result<Vec<(String, String)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let skip_ws = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    };
    loop {
        skip_ws(&mut i);
        if i >= chars.len() {
            return Ok(out);
        }
        let start = i;
        while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        let key: String = chars[start..i].iter().collect();
        skip_ws(&mut i);
        if key.is_empty() || i >= chars.len() || chars[i] != '=' {
            let rest: String = chars[start..].iter().collect();
            return Err(Error::Parse { line: line_no, msg: format!("expected `key = value`, got `{}`", rest.trim()) });
        }
        i += 1;
        skip_ws(&mut i);
        let mut value = String::new();
        loop {
            while i < chars.len() && !chars[i].is_whitespace() {
                value.push(chars[i]);
                i += 1;
            }
            // a list continues across spaces next to commas
            let mut j = i;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            let continues = value.ends_with(',') || (j < chars.len() && chars[j] == ',');
            if continues && j < chars.len() {
                i = j;
            } else {
                break;
            }
        }
        if value.is_empty() {
            return Err(Error::Parse { line: line_no, msg: format!("`{key}` has no value") });
        }
        out.push((key, value));
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let mut sections: BTreeMap<&str, Section> = BTreeMap::new();
    let mut current: Option<&str> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("malformed section header `{line}`") })?;
            let known = SECTIONS
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("unknown section [{name}]") })?;
            if sections.contains_key(known) {
                return Err(Error::Parse { line: line_no, msg: format!("section [{name}] appears twice") });
            }
            sections.insert(known, Section { header_line: line_no, entries: BTreeMap::new() });
            current = Some(known);
            continue;
        }
        let name =
            current.ok_or_else(|| Error::Parse { line: line_no, msg: "key before any section header".into() })?;
        let section = sections.get_mut(name).expect("current section exists");
        for (key, value) in pairs(line_no, line)? {
            if section.entries.contains_key(&key) {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate key `{key}` in [{name}]") });
            }
            section.entries.insert(key, (line_no, value));
        }
    }
    let eof = last_line + 1;
    let mut take = |name: &str| {
        sections.remove(name).ok_or_else(|| Error::Parse { line: eof, msg: format!("missing section [{name}]") })
    };
    let domain = parse_domain_section(take("domain")?)?;
    let g = parse_g_section(take("g")?)?;
    let f = parse_f_section(take("f")?)?;
    let mut params = take("params")?;
    let solver = take("solver").ok();

    let lambda = params.number("params", "lambda")?;
    let mu = params.number("params", "mu")?;
    let (p_line, p_text) = params.require("params", "p")?;
    let p = number(p_line, "p", &p_text)?;
    let params_line = params.header_line;
    params.finish("params")?;
    crate::problem::check_p(p).map_err(|e| Error::Parse { line: p_line, msg: e.to_string() })?;

    let problem = ProblemSpec { domain, g, f, lambda, mu, p };
    problem.validate().map_err(|e| Error::Parse { line: params_line, msg: e.to_string() })?;
    let opts = match solver {
        Some(s) => parse_solver_section(s)?,
        None => SolverOpts::default(),
    };
    Ok(ProblemFile { problem, opts })
}

fn parse_domain_section(mut s: Section) -> Result<DomainSpec> {
    let header = s.header_line;
    let (kline, kind) = s.require("domain", "kind")?;
    let (nline, ntext) = s.require("domain", "n")?;
    let n = count(nline, "n", &ntext)?;
    let bounds = match kind.as_str() {
        "interval" => Bounds::Interval { a: s.number("domain", "a")?, b: s.number("domain", "b")? },
        "rectangle" => Bounds::Rectangle {
            ax: s.number("domain", "ax")?,
            bx: s.number("domain", "bx")?,
            ay: s.number("domain", "ay")?,
            by: s.number("domain", "by")?,
        },
        other => {
            return Err(Error::Parse {
                line: kline,
                msg: format!("unknown domain kind `{other}` (interval or rectangle)"),
            })
        }
    };
    s.finish("domain")?;
    let spec = DomainSpec { bounds, n };
    spec.validate().map_err(|e| Error::Parse { line: header, msg: e.to_string() })?;
    Ok(spec)
}

fn parse_g_section(mut s: Section) -> Result<GSpec> {
    let header = s.header_line;
    let (fline, family) = s.require("g", "family")?;
    let g = match family.as_str() {
        "power" => GSpec::Power { alpha: s.number("g", "alpha")? },
        "power_shift" => GSpec::PowerShift { alpha: s.number("g", "alpha")?, a0: s.number("g", "a0")? },
        "table" => GSpec::Table { s: s.list("g", "s")?, values: s.list("g", "values")? },
        other => return Err(Error::Parse { line: fline, msg: format!("unknown g family `{other}`") }),
    };
    s.finish("g")?;
    g.validate().map_err(|e| Error::Parse { line: header, msg: e.to_string() })?;
    Ok(g)
}

fn parse_f_section(mut s: Section) -> Result<FSpec> {
    let header = s.header_line;
    let (fline, family) = s.require("f", "family")?;
    let shape = match family.as_str() {
        "const" => FShape::Const,
        "power" => FShape::Power { beta: s.number("f", "beta")? },
        "linear" => FShape::Linear { slope: s.number("f", "slope")? },
        "arrhenius" => FShape::Arrhenius { eps: s.number("f", "eps")? },
        "table" => FShape::Table { s: s.list("f", "s")?, values: s.list("f", "values")? },
        other => return Err(Error::Parse { line: fline, msg: format!("unknown f family `{other}`") }),
    };
    let weight = match s.take("weight") {
        None => Weight::Uniform,
        Some((_, w)) if w == "uniform" => Weight::Uniform,
        Some((_, w)) if w == "linear" => Weight::Linear { w0: s.number("f", "w0")?, w1: s.number("f", "w1")? },
        Some((line, w)) => return Err(Error::Parse { line, msg: format!("unknown weight `{w}` (uniform or linear)") }),
    };
    s.finish("f")?;
    let f = FSpec { shape, weight };
    f.validate().map_err(|e| Error::Parse { line: header, msg: e.to_string() })?;
    Ok(f)
}

fn parse_solver_section(mut s: Section) -> Result<SolverOpts> {
    let header = s.header_line;
    let d = SolverOpts::default();
    let max_iter = match s.take("max_iter") {
        Some((line, v)) => count(line, "max_iter", &v)?,
        None => d.max_iter,
    };
    let opts = SolverOpts {
        tol: s.number_or("tol", d.tol)?,
        max_iter,
        sup_cap: s.number_or("sup_cap", d.sup_cap)?,
        damping_floor: s.number_or("damping_floor", d.damping_floor)?,
        floor_base: s.number_or("floor_base", d.floor_base)?,
        floor_slope: s.number_or("floor_slope", d.floor_slope)?,
        eta: s.number_or("eta", d.eta)?,
        hprime_eta: s.number_or("hprime_eta", d.hprime_eta)?,
    };
    s.finish("solver")?;
    opts.validate().map_err(|e| Error::Parse { line: header, msg: e.to_string() })?;
    Ok(opts)
}

fn list17(v: &[f64]) -> String {
    v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(", ")
}

/// Canonical text form; `parse_problem(render_problem(..))` reproduces the
/// input exactly.
pub fn render_problem(problem: &ProblemSpec, opts: &SolverOpts) -> String {
    let mut out = String::from("[domain]\n");
    match problem.domain.bounds {
        Bounds::Interval { a, b } => out.push_str(&format!("kind = interval\na = {}\nb = {}\n", fmt17(a), fmt17(b))),
        Bounds::Rectangle { ax, bx, ay, by } => out.push_str(&format!(
            "kind = rectangle\nax = {}\nbx = {}\nay = {}\nby = {}\n",
            fmt17(ax),
            fmt17(bx),
            fmt17(ay),
            fmt17(by)
        )),
    }
    out.push_str(&format!("n = {}\n\n[g]\n", problem.domain.n));
    match &problem.g {
        GSpec::Power { alpha } => out.push_str(&format!("family = power\nalpha = {}\n", fmt17(*alpha))),
        GSpec::PowerShift { alpha, a0 } => {
            out.push_str(&format!("family = power_shift\nalpha = {}\na0 = {}\n", fmt17(*alpha), fmt17(*a0)))
        }
        GSpec::Table { s, values } => {
            out.push_str(&format!("family = table\ns = {}\nvalues = {}\n", list17(s), list17(values)))
        }
    }
    out.push_str("\n[f]\n");
    match &problem.f.shape {
        FShape::Const => out.push_str("family = const\n"),
        FShape::Power { beta } => out.push_str(&format!("family = power\nbeta = {}\n", fmt17(*beta))),
        FShape::Linear { slope } => out.push_str(&format!("family = linear\nslope = {}\n", fmt17(*slope))),
        FShape::Arrhenius { eps } => out.push_str(&format!("family = arrhenius\neps = {}\n", fmt17(*eps))),
        FShape::Table { s, values } => {
            out.push_str(&format!("family = table\ns = {}\nvalues = {}\n", list17(s), list17(values)))
        }
    }
    if let Weight::Linear { w0, w1 } = problem.f.weight {
        out.push_str(&format!("weight = linear\nw0 = {}\nw1 = {}\n", fmt17(w0), fmt17(w1)));
    }
    out.push_str(&format!(
        "\n[params]\nlambda = {}\nmu = {}\np = {}\n",
        fmt17(problem.lambda),
        fmt17(problem.mu),
        fmt17(problem.p)
    ));
    out.push_str(&format!(
        "\n[solver]\ntol = {}\nmax_iter = {}\nsup_cap = {}\ndamping_floor = {}\nfloor_base = {}\nfloor_slope = {}\neta = {}\nhprime_eta = {}\n",
        fmt17(opts.tol),
        opts.max_iter,
        fmt17(opts.sup_cap),
        fmt17(opts.damping_floor),
        fmt17(opts.floor_base),
        fmt17(opts.floor_slope),
        fmt17(opts.eta),
        fmt17(opts.hprime_eta)
    ));
    out
}

/// `name(key=value, ...)` or a bare `name`; list values use `;`.
fn call(expr: &str) -> Result<(String, Section)> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let expr = expr.trim();
    let (name, args) = match expr.find('(') {
        Some(open) => {
            let inner =
                expr[open + 1..].strip_suffix(')').ok_or_else(|| bad(format!("unbalanced parentheses in `{expr}`")))?;
            (expr[..open].trim(), inner)
        }
        None => (expr, ""),
    };
    let mut section = Section { header_line: 1, entries: BTreeMap::new() };
    for arg in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let (k, v) = arg.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{arg}`")))?;
        let key = k.trim().to_string();
        if section.entries.insert(key.clone(), (1, v.trim().replace(';', ","))).is_some() {
            return Err(bad(format!("duplicate argument `{key}`")));
        }
    }
    Ok((name.to_string(), section))
}

/// `power(alpha=0.5)`, `power_shift(alpha=0.5, a0=1)`, `table(s=1;2, values=2;1)`.
pub fn parse_g_expr(expr: &str) -> Result<GSpec> {
    let (name, mut args) = call(expr)?;
    args.entries.insert("family".into(), (1, name));
    parse_g_section(args)
}

/// `const`, `power(beta=0.5)`, `arrhenius(eps=0.3, weight=linear, w0=1, w1=2)`, ...
pub fn parse_f_expr(expr: &str) -> Result<FSpec> {
    let (name, mut args) = call(expr)?;
    args.entries.insert("family".into(), (1, name));
    parse_f_section(args)
}

/// `interval:a:b:n` or `rectangle:ax:bx:ay:by:n`.
pub fn parse_domain_expr(expr: &str) -> Result<DomainSpec> {
    let parts: Vec<&str> = expr.trim().split(':').collect();
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let num = |i: usize| number(1, "domain", parts[i]);
    let spec = match (parts[0], parts.len()) {
        ("interval", 4) => {
            DomainSpec { bounds: Bounds::Interval { a: num(1)?, b: num(2)? }, n: count(1, "n", parts[3])? }
        }
        ("rectangle", 6) => DomainSpec {
            bounds: Bounds::Rectangle { ax: num(1)?, bx: num(2)?, ay: num(3)?, by: num(4)? },
            n: count(1, "n", parts[5])?,
        },
        _ => return Err(bad(format!("expected interval:a:b:n or rectangle:ax:bx:ay:by:n, got `{expr}`"))),
    };
    spec.validate().map_err(|e| bad(e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXAMPLE: &str = "[domain]\nkind=interval a=0 b=1 n=256\n[g]\nfamily=power_shift alpha=0.5 a0=1\n[f]\nfamily=const\n[params]\nlambda=2.0 mu=1.0 p=2.0\n";

    #[test]
    fn parses_compact_example() {
        let pf = parse_problem(EXAMPLE).unwrap();
        assert_eq!(pf.problem.domain, DomainSpec::unit_interval(256));
        assert_eq!(pf.problem.g, GSpec::power_shift(0.5, 1.0));
        assert_eq!(pf.problem.f, FSpec::constant());
        assert_eq!((pf.problem.lambda, pf.problem.mu, pf.problem.p), (2.0, 1.0, 2.0));
        assert_eq!(pf.opts, SolverOpts::default());
    }

    #[test]
    fn spaced_pairs_lists_and_comments() {
        let text = "# header\n[domain]\nkind = rectangle  ax = 0 bx = 1\nay = 0 by = 2 n = 8\n[g]\nfamily = table s = 0.1, 1,2 values = 10, 1 ,0.5\n[f]\nfamily = power beta = 0.5 weight = linear w0 = 1 w1 = 2\n[params]\nlambda = 1 mu = 0 p = 1.5 # trailing\n[solver]\ntol = 1e-9 max_iter = 40\n";
        let pf = parse_problem(text).unwrap();
        assert_eq!(pf.problem.g, GSpec::Table { s: vec![0.1, 1.0, 2.0], values: vec![10.0, 1.0, 0.5] });
        assert_eq!(pf.problem.f.weight, Weight::Linear { w0: 1.0, w1: 2.0 });
        assert_eq!(pf.opts.max_iter, 40);
        assert_eq!(pf.opts.tol, 1e-9);
    }

    fn parse_err(text: &str) -> (usize, String) {
        match parse_problem(text) {
            Err(Error::Parse { line, msg }) => (line, msg),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_p_with_line() {
        let (line, msg) = parse_err(&EXAMPLE.replace("p=2.0", "p=2.5"));
        assert_eq!(line, 8);
        assert!(msg.contains("(0, 2]"), "{msg}");
    }

    #[test]
    fn rejects_missing_section_and_unknown_keys() {
        let no_f = EXAMPLE.replace("[f]\nfamily=const\n", "");
        assert!(parse_err(&no_f).1.contains("missing section [f]"));
        let (line, msg) = parse_err(&EXAMPLE.replace("a0=1", "a0=1 beta=2"));
        assert_eq!(line, 4);
        assert!(msg.contains("unknown key `beta`"));
        let (line, msg) = parse_err(&EXAMPLE.replace("n=256", "n=2x6"));
        assert_eq!(line, 2);
        assert!(msg.contains("`n`"));
        assert!(parse_err(&EXAMPLE.replace("family=const", "family=cubic")).1.contains("unknown f family"));
        assert!(parse_err(&EXAMPLE.replace("mu=1.0", "mu=1.0 mu=2")).1.contains("duplicate"));
        assert!(parse_err(&EXAMPLE.replace("[params]", "[parameters]")).1.contains("unknown section"));
        assert!(parse_err(&EXAMPLE.replace("lambda=2.0", "lambda=inf")).1.contains("finite"));
    }

    #[test]
    fn expressions() {
        assert_eq!(parse_g_expr("power(alpha=0.5)").unwrap(), GSpec::power(0.5));
        assert_eq!(parse_g_expr(" power_shift( alpha = 0.5 , a0 = 2 ) ").unwrap(), GSpec::power_shift(0.5, 2.0));
        assert_eq!(
            parse_g_expr("table(s=1;2, values=2;1)").unwrap(),
            GSpec::Table { s: vec![1.0, 2.0], values: vec![2.0, 1.0] }
        );
        assert_eq!(parse_f_expr("const").unwrap(), FSpec::constant());
        assert_eq!(
            parse_f_expr("arrhenius(eps=0.3, weight=linear, w0=1, w1=2)").unwrap(),
            FSpec::arrhenius(0.3).with_weight(Weight::Linear { w0: 1.0, w1: 2.0 })
        );
        assert!(parse_g_expr("power(beta=0.5)").is_err());
        assert!(parse_g_expr("power(alpha=0.5").is_err());
        assert_eq!(parse_domain_expr("interval:0:1:256").unwrap(), DomainSpec::unit_interval(256));
        assert_eq!(parse_domain_expr("rectangle:0:1:0:2:16").unwrap(), DomainSpec::rectangle(0.0, 1.0, 0.0, 2.0, 16));
        assert!(parse_domain_expr("interval:1:0:8").is_err());
        assert!(parse_domain_expr("disc:0:1").is_err());
    }

    fn arb_g() -> impl Strategy<Value = GSpec> {
        prop_oneof![
            (0.01f64..3.0).prop_map(GSpec::power),
            (0.01f64..3.0, 0.0f64..50.0).prop_map(|(a, b)| GSpec::power_shift(a, b)),
            (0.01f64..1.0, 1.0f64..100.0, 0.01f64..1.0).prop_map(|(s0, v0, r)| GSpec::Table {
                s: vec![s0, 2.0 * s0, 5.0 * s0],
                values: vec![v0, v0 * r, v0 * r * r],
            }),
        ]
    }

    fn arb_f() -> impl Strategy<Value = FSpec> {
        let shape = prop_oneof![
            Just(FShape::Const),
            (0.0f64..3.0).prop_map(|beta| FShape::Power { beta }),
            (0.0f64..3.0).prop_map(|slope| FShape::Linear { slope }),
            (0.0f64..2.0).prop_map(|eps| FShape::Arrhenius { eps }),
        ];
        let weight = prop_oneof![
            Just(Weight::Uniform),
            (0.1f64..5.0, 0.1f64..5.0).prop_map(|(w0, w1)| Weight::Linear { w0, w1 }),
        ];
        (shape, weight).prop_map(|(shape, weight)| FSpec { shape, weight })
    }

    fn arb_domain() -> impl Strategy<Value = DomainSpec> {
        prop_oneof![
            (-5.0f64..5.0, 0.1f64..10.0, 3usize..500).prop_map(|(a, l, n)| DomainSpec::interval(a, a + l, n)),
            (-5.0f64..5.0, 0.1f64..10.0, 0.1f64..10.0, 3usize..100).prop_map(|(a, l, m, n)| DomainSpec::rectangle(
                a,
                a + l,
                -a,
                -a + m,
                n
            )),
        ]
    }

    proptest! {
        #[test]
        fn render_round_trips(
            domain in arb_domain(),
            g in arb_g(),
            f in arb_f(),
            lambda in 0.0f64..1e3,
            mu in 0.0f64..1e3,
            p in 1e-3f64..=2.0,
            tol in 1e-14f64..1e-2,
            max_iter in 1usize..10_000,
        ) {
            let problem = ProblemSpec { domain, g, f, lambda, mu, p };
            let opts = SolverOpts { tol, max_iter, ..SolverOpts::default() };
            let text = render_problem(&problem, &opts);
            let back = parse_problem(&text).unwrap();
            prop_assert_eq!(back.problem, problem);
            prop_assert_eq!(back.opts, opts);
        }
    }
}
