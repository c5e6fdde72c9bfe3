//! Command-line front end. `run` is the whole program minus process exit.
//!
//! Exit status: 0 for a positive answer, 1 for a negative one (within the
//! budget), 2 for bad input.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::docalculus::{rule_applicable, Budget, RuleBinding, RuleId, Way};
use crate::dsl::{parse_corpus, parse_graph, ParsedGraph};
use crate::expr::{parse_expr, render, Format, ProbExpr, ProbTerm};
use crate::graph::{certify, CausalDiagram, Mutilation, SeparationCertificate, VarSet};
use crate::identify::{identify_effect, IdentifyResult};
use crate::mediation::{check_set_a, check_set_b, nde_estimand, AssumptionReport, MediationError, MediationQuery};
use crate::oracle::{eval_estimand, random_scm, EvalResult, PopEnv};
use crate::transport::{meta_synthesize, transport_effect, SelectionDiagram, SynthesisError, TransportError};
use crate::Scm;

#[derive(Debug, Parser)]
#[command(name = "docalc", version, about = "Symbolic causal inference with the do-calculus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Identify an interventional query from observational data.
    Identify(Opts),
    /// Natural and controlled direct effects; `--query "X -> M -> Y"`.
    Mediate(Opts),
    /// Transport an experimental effect to the target population.
    Transport(Opts),
    /// Plan an estimator of `--effect` from the studies in `--studies`.
    Synthesize(Opts),
    /// Evaluate `--effect` on the model in `--scm`, or on a random model
    /// of `--graph` drawn with `--seed`.
    Eval(Opts),
    /// Check one rule; `--bind "X=..;Y=..;Z=..;W=.."`.
    CheckRule(Opts),
    /// Test `--query "A, B _|_ C | D"`.
    DSep(Opts),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Text,
    Latex,
    Structured,
}

#[derive(Debug, Args)]
pub struct Opts {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub scm: Option<PathBuf>,
    #[arg(long)]
    pub studies: Option<PathBuf>,
    #[arg(long)]
    pub effect: Option<String>,
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutFormat,
    #[arg(long, default_value_t = 8)]
    pub budget_depth: usize,
    #[arg(long, default_value_t = 512)]
    pub budget_width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub trace: bool,
    /// check-rule: R1, R2 or R3.
    #[arg(long)]
    pub rule: Option<String>,
    /// check-rule: `X=..;Y=..;Z=..;W=..`, omitted sets are empty.
    #[arg(long)]
    pub bind: Option<String>,
    /// synthesize: comma-separated study labels; default all.
    #[arg(long = "use")]
    pub use_studies: Option<String>,
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Res = Result<(bool, String), Fail>;

/// Parses `args` (without the program name) and runs the command.
pub fn run<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("docalc")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 { Outcome { code, stdout: text, stderr: String::new() } } else { Outcome { code, stdout: String::new(), stderr: text } };
        }
    };
    let r = match &cli.command {
        Command::Identify(o) => identify(o),
        Command::Mediate(o) => mediate(o),
        Command::Transport(o) => transport(o),
        Command::Synthesize(o) => synthesize(o),
        Command::Eval(o) => eval(o),
        Command::CheckRule(o) => check_rule(o),
        Command::DSep(o) => dsep(o),
    };
    match r {
        Ok((positive, mut out)) => {
            if !out.ends_with('\n') {
                out.push('\n');
            }
            Outcome { code: if positive { 0 } else { 1 }, stdout: out, stderr: String::new() }
        }
        Err(Fail(msg)) => Outcome { code: 2, stdout: String::new(), stderr: format!("error: {msg}\n") },
    }
}

fn read(path: &Option<PathBuf>, flag: &str) -> Result<String, Fail> {
    let p = path.as_ref().ok_or_else(|| Fail(format!("--{flag} is required")))?;
    std::fs::read_to_string(p).map_err(|e| Fail(format!("{}: {e}", p.display())))
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str, Fail> {
    v.as_deref().ok_or_else(|| Fail(format!("--{flag} is required")))
}

fn graph(o: &Opts) -> Result<ParsedGraph, Fail> {
    Ok(parse_graph(&read(&o.graph, "graph")?)?)
}

fn fmt_of(o: &Opts) -> Format {
    match o.format {
        OutFormat::Text => Format::Text,
        OutFormat::Latex => Format::Latex,
        OutFormat::Structured => Format::Structured,
    }
}

fn show(o: &Opts, e: &ProbExpr) -> String {
    render(e, fmt_of(o))
}

fn structured(o: &Opts) -> bool {
    o.format == OutFormat::Structured
}

fn emit(v: Value) -> String {
    serde_json::to_string_pretty(&v).expect("serializable")
}

fn budget(o: &Opts) -> Budget {
    Budget { depth: o.budget_depth, width: o.budget_width }
}

/// The single term of `--effect`.
fn effect_term(o: &Opts) -> Result<ProbTerm, Fail> {
    match parse_expr(required(&o.effect, "effect")?)? {
        ProbExpr::Term(t) => Ok(t),
        other => Err(Fail(format!("--effect must be a single probability term, got `{other}`"))),
    }
}

fn sets(d: &CausalDiagram, t: &ProbTerm) -> Result<(VarSet, VarSet, VarSet), Fail> {
    Ok((d.set(&t.outcome_nodes())?, d.set(&t.do_nodes())?, d.set(&t.given_nodes())?))
}

fn cert_json(c: &SeparationCertificate) -> Value {
    serde_json::to_value(c).expect("serializable")
}

fn identify(o: &Opts) -> Res {
    let d = graph(o)?.into_diagram();
    let t = effect_term(o)?;
    let (y, x, c) = sets(&d, &t)?;
    let r = identify_effect(&d, &y, &x, &c)?;
    Ok(match &r {
        IdentifyResult::Identified { estimand, trace } => {
            let out = if structured(o) {
                let mut v = json!({ "status": "identified", "estimand": show(o, &estimand.expr) });
                if o.trace {
                    v["trace"] = json!(trace);
                }
                emit(v)
            } else {
                let mut s = show(o, &estimand.expr);
                if o.trace {
                    for line in trace {
                        s.push_str(&format!("\n  {line}"));
                    }
                }
                s
            };
            (true, out)
        }
        IdentifyResult::NonIdentifiable(h) => {
            let out = if structured(o) {
                emit(json!({ "status": "not-identifiable", "hedge": { "component": h.component, "subcomponent": h.subcomponent, "treatment": h.treatment, "edges": h.edges } }))
            } else {
                format!("not identifiable: {h}")
            };
            (false, out)
        }
    })
}

fn parse_chain(q: &str) -> Result<MediationQuery, Fail> {
    let parts: Vec<&str> = q.split("->").map(str::trim).collect();
    match parts.as_slice() {
        [x, m, y] if parts.iter().all(|p| !p.is_empty()) => Ok(MediationQuery::new(x, m, y)),
        _ => Err(Fail(format!("--query must read `X -> M -> Y`, got `{q}`"))),
    }
}

fn report_json(r: &AssumptionReport) -> Value {
    let conds: Vec<Value> = r.conditions.iter().map(|c| json!({ "name": c.name, "holds": c.holds })).collect();
    json!({ "set": r.set_name.to_string(), "holds": r.holds, "w": r.w_used, "conditions": conds })
}

fn report_text(r: &AssumptionReport) -> String {
    let conds: Vec<String> = r.conditions.iter().map(|c| format!("{} {}", c.name, if c.holds { "ok" } else { "fails" })).collect();
    format!("set {} with W={{{}}}: {}", r.set_name, r.w_used[0].join(", "), conds.join(", "))
}

fn mediate(o: &Opts) -> Res {
    let d = graph(o)?.into_diagram();
    let q = parse_chain(required(&o.query, "query")?)?;
    let none = VarSet::new();
    let b = check_set_b(&d, &q, &none)?;
    match nde_estimand(&d, &q) {
        Ok(r) => {
            let out = if structured(o) {
                emit(json!({
                    "status": "identified",
                    "nde": show(o, &r.estimand.expr),
                    "w": r.w,
                    "mediator_term": show(o, &r.mediator_term.expr),
                    "outcome_term": show(o, &r.outcome_term.expr),
                    "set_a": report_json(&r.report),
                    "set_b_empty_w": report_json(&b),
                    "warnings": r.warnings,
                }))
            } else {
                let mut s = format!("NDE = {}", show(o, &r.estimand.expr));
                s.push_str(&format!("\n{}\n{}", report_text(&r.report), report_text(&b)));
                for w in &r.warnings {
                    s.push_str(&format!("\nwarning: {w}"));
                }
                s
            };
            Ok((true, out))
        }
        Err(MediationError::SearchExhausted(tried)) => {
            let a = check_set_a(&d, &q, &none)?;
            let out = if structured(o) {
                emit(json!({ "status": "not-identified", "candidates": tried.len(), "set_a_empty_w": report_json(&a) }))
            } else {
                format!("no covariate set satisfies set A ({} tried)\n{}", tried.len(), report_text(&a))
            };
            Ok((false, out))
        }
        Err(e) => Err(e.into()),
    }
}

fn transport(o: &Opts) -> Res {
    let sd = match graph(o)? {
        ParsedGraph::Selection(sd) => sd,
        ParsedGraph::Causal(d) => SelectionDiagram::new(d)?,
    };
    let t = effect_term(o)?;
    let (y, x, c) = sets(sd.diagram(), &t)?;
    if !c.is_empty() {
        return Err(Fail("transport takes an unconditional effect".into()));
    }
    match transport_effect(&sd, &y, &x, budget(o)) {
        Ok(f) => {
            let trace = f.derivation.trace(fmt_of(o));
            let out = if structured(o) {
                let mut v = json!({ "status": "transportable", "formula": show(o, &f.expr) });
                if o.trace {
                    v["trace"] = serde_json::to_value(&trace).expect("serializable");
                }
                emit(v)
            } else {
                let mut s = show(o, &f.expr);
                if o.trace {
                    for r in &trace {
                        s.push_str(&format!("\n  {}. {}: {} = {}", r.step, r.kind, r.before, r.after));
                        if let Some(q) = &r.query {
                            s.push_str(&format!("  [{q}]"));
                        }
                    }
                }
                s
            };
            Ok((true, out))
        }
        Err(TransportError::NotFound(e)) => {
            let out = if structured(o) { emit(json!({ "status": "not-found", "reason": e.to_string() })) } else { format!("not transportable: {e}") };
            Ok((false, out))
        }
        Err(e) => Err(e.into()),
    }
}

fn synthesize(o: &Opts) -> Res {
    let corpus = parse_corpus(&read(&o.studies, "studies")?)?;
    let studies = match &o.use_studies {
        None => corpus.studies.clone(),
        Some(list) => {
            let labels: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            for l in &labels {
                if corpus.study(l).is_none() {
                    return Err(Fail(format!("no study `{l}` in the corpus")));
                }
            }
            corpus.select(&labels)
        }
    };
    let t = effect_term(o)?;
    let contrib = |cs: &[crate::transport::StudyContribution]| -> Value {
        cs.iter().map(|c| json!({ "study": c.label, "can": c.can, "cannot": c.cannot })).collect()
    };
    match meta_synthesize(&corpus.target, &t, &studies) {
        Ok(p) => {
            let out = if structured(o) {
                let subs: Vec<Value> = p.sub_relations.iter().map(|s| json!({ "term": show(o, &ProbExpr::Term(s.term.clone())), "study": s.study })).collect();
                emit(json!({
                    "status": "synthesizable",
                    "decomposition": p.decomposition,
                    "estimator": show(o, &p.composition),
                    "sub_relations": subs,
                    "contributions": contrib(&p.contributions),
                }))
            } else {
                let mut s = format!("{}\n  via {}", show(o, &p.composition), p.decomposition);
                for sub in &p.sub_relations {
                    s.push_str(&format!("\n  {} from study {}", ProbExpr::Term(sub.term.clone()), sub.study));
                }
                s
            };
            Ok((true, out))
        }
        Err(SynthesisError::Unsynthesizable { missing, contributions }) => {
            let out = if structured(o) {
                emit(json!({ "status": "unsynthesizable", "missing": missing, "contributions": contrib(&contributions) }))
            } else {
                let mut s = format!("unsynthesizable; no study supplies: {}", missing.join(", "));
                for c in &contributions {
                    s.push_str(&format!("\n  study {}: can supply {}", c.label, if c.can.is_empty() { "nothing".into() } else { c.can.join(", ") }));
                }
                s
            };
            Ok((false, out))
        }
        Err(e) => Err(e.into()),
    }
}

fn eval(o: &Opts) -> Res {
    let m = match (&o.scm, &o.graph) {
        (None, Some(_)) => random_scm::<f64>(&graph(o)?.into_diagram(), o.seed),
        _ => Scm::from_json(&read(&o.scm, "scm")?)?,
    };
    let e = parse_expr(required(&o.effect, "effect")?)?;
    let r = eval_estimand(&e, &PopEnv::single(&m))?;
    let out = match &r {
        EvalResult::Number(x) => {
            if structured(o) {
                emit(json!({ "value": x }))
            } else {
                format!("{x}")
            }
        }
        EvalResult::Dist(dist) => {
            let rows: Vec<(String, f64)> = dist
                .table
                .iter()
                .map(|(k, p)| {
                    let a: Vec<String> = dist.vars.iter().zip(k).map(|(v, x)| format!("{v}={x}")).collect();
                    (a.join(", "), *p)
                })
                .collect();
            if structured(o) {
                emit(json!({ "vars": dist.vars, "rows": rows.iter().map(|(a, p)| json!({ "at": a, "value": p })).collect::<Vec<_>>() }))
            } else {
                rows.iter().map(|(a, p)| format!("{a}: {p}")).collect::<Vec<_>>().join("\n")
            }
        }
    };
    Ok((true, out))
}

fn names(list: &str) -> Vec<&str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn cert_out(o: &Opts, c: &SeparationCertificate, head: &str) -> Res {
    let out = if structured(o) {
        emit(cert_json(c))
    } else {
        let mut s = format!("{head}: {}", if c.separated() { "separated" } else { "connected" });
        let given = if c.given.is_empty() { "∅".to_string() } else { c.given.join(", ") };
        s.push_str(&format!("\n  ({} ⊥ {} | {given}) in {}", c.a.join(", "), c.b.join(", "), c.graph_tag));
        if let Some(w) = c.witness_text() {
            s.push_str(&format!("\n  witness: {w}"));
        }
        s
    };
    Ok((c.separated(), out))
}

fn check_rule(o: &Opts) -> Res {
    let d = graph(o)?.into_diagram();
    let rule = match required(&o.rule, "rule")?.to_ascii_uppercase().as_str() {
        "R1" | "1" => RuleId::R1,
        "R2" | "2" => RuleId::R2,
        "R3" | "3" => RuleId::R3,
        other => return Err(Fail(format!("unknown rule `{other}`"))),
    };
    let mut parts: [Vec<&str>; 4] = Default::default();
    for piece in required(&o.bind, "bind")?.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = piece.split_once('=').ok_or_else(|| Fail(format!("binding `{piece}` is not `KEY=names`")))?;
        let slot = match k.trim() {
            "X" | "x" => 0,
            "Y" | "y" => 1,
            "Z" | "z" => 2,
            "W" | "w" => 3,
            other => return Err(Fail(format!("unknown binding key `{other}`"))),
        };
        parts[slot] = names(v);
    }
    let [x, y, z, w] = parts;
    let b = RuleBinding::new(d.set(&x)?, d.set(&y)?, d.set(&z)?, d.set(&w)?, Way::Forward);
    let c = rule_applicable(&d, rule, &b)?;
    cert_out(o, &c, &rule.to_string())
}

fn dsep(o: &Opts) -> Res {
    let d = graph(o)?.into_diagram();
    let q = required(&o.query, "query")?;
    let (a, rest) = q.split_once("_|_").ok_or_else(|| Fail(format!("--query must read `A _|_ B | C`, got `{q}`")))?;
    let (b, given) = rest.split_once('|').unwrap_or((rest, ""));
    let c = certify(&d, &Mutilation::none(), &d.set(&names(a))?, &d.set(&names(b))?, &d.set(&names(given))?)?;
    cert_out(o, &c, "d-separation")
}
