use super::{ProbExpr, ProbTerm, Slot, Sym, Val, SOURCE, TARGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Human-readable, e.g. `Σ_z P(y | do(x), z) P(z)`.
    Text,
    Latex,
    /// Round-trips through `parse_expr`.
    Structured,
}

pub fn render(e: &ProbExpr, fmt: Format) -> String {
    match fmt {
        Format::Text => text(e),
        Format::Latex => latex(e),
        Format::Structured => structured(e),
    }
}

fn primes(p: u8) -> String {
    "'".repeat(p as usize)
}

fn sym_lower(s: &Sym) -> String {
    format!("{}{}", s.node.to_lowercase(), primes(s.primes))
}

fn slot_text(s: &Slot) -> String {
    match s.val {
        Val::Sym(p) => format!("{}{}", s.node.to_lowercase(), primes(p)),
        Val::Fixed(v) => format!("{}={v}", s.node),
    }
}

fn pop_prefix(letter: &str, pop: &str) -> String {
    match pop {
        SOURCE => letter.to_string(),
        TARGET => format!("{letter}*"),
        other => format!("{letter}_{other}"),
    }
}

fn join(slots: &[Slot], f: fn(&Slot) -> String) -> String {
    slots.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn cond_text(t: &ProbTerm, f: fn(&Slot) -> String, do_word: &str) -> String {
    let mut parts = Vec::new();
    if !t.dos.is_empty() {
        parts.push(format!("{do_word}({})", join(&t.dos, f)));
    }
    parts.extend(t.given.iter().map(f));
    parts.join(", ")
}

/// The single-term expectation `E(Y | ...)` shape, if `e` has it.
fn simple_expectation<'a>(var: &Sym, of: &'a ProbExpr) -> Option<&'a ProbTerm> {
    match of {
        ProbExpr::Term(t) if t.outcome.len() == 1 && t.outcome[0] == Slot::sym(var) => Some(t),
        _ => None,
    }
}

fn text(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Const(c) => c.to_string(),
        ProbExpr::Term(t) => {
            let cond = cond_text(t, slot_text, "do");
            let out = join(&t.outcome, slot_text);
            if cond.is_empty() {
                format!("{}({out})", pop_prefix("P", &t.pop))
            } else {
                format!("{}({out} | {cond})", pop_prefix("P", &t.pop))
            }
        }
        ProbExpr::Sum { over, body } => {
            let idx = if over.len() == 1 {
                sym_lower(&over[0])
            } else {
                format!("{{{}}}", over.iter().map(sym_lower).collect::<Vec<_>>().join(","))
            };
            format!("Σ_{idx} {}", text_factor(body))
        }
        ProbExpr::Product(fs) => fs.iter().map(text_factor).collect::<Vec<_>>().join(" "),
        ProbExpr::Quotient(a, b) => format!("{} / {}", text_operand(a), text_operand(b)),
        ProbExpr::Difference(a, b) => {
            let rhs = if matches!(**b, ProbExpr::Difference(..)) { format!("[{}]", text(b)) } else { text(b) };
            format!("{} - {rhs}", text(a))
        }
        ProbExpr::Expectation { var, of } => match simple_expectation(var, of) {
            Some(t) => {
                let cond = cond_text(t, slot_text, "do");
                let head = pop_prefix("E", &t.pop);
                if cond.is_empty() {
                    format!("{head}({})", var.node)
                } else {
                    format!("{head}({} | {cond})", var.node)
                }
            }
            None => format!("E_{}[{}]", sym_lower(var), text(of)),
        },
    }
}

// Operand of a product or sum body: bracket differences and quotients.
fn text_factor(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Difference(..) | ProbExpr::Quotient(..) => format!("[{}]", text(e)),
        _ => text(e),
    }
}

fn text_operand(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Term(_) | ProbExpr::Const(_) | ProbExpr::Expectation { .. } => text(e),
        _ => format!("[{}]", text(e)),
    }
}

fn slot_latex(s: &Slot) -> String {
    match s.val {
        Val::Sym(p) => format!("{}{}", s.node.to_lowercase(), primes(p)),
        Val::Fixed(v) => format!("{}{{=}}{v}", s.node),
    }
}

fn latex_prefix(letter: &str, pop: &str) -> String {
    match pop {
        SOURCE => letter.to_string(),
        TARGET => format!("{letter}^{{*}}"),
        other => format!("{letter}_{{{other}}}"),
    }
}

fn latex(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Const(c) => c.to_string(),
        ProbExpr::Term(t) => {
            let cond = cond_text(t, slot_latex, "\\mathrm{do}");
            let out = join(&t.outcome, slot_latex);
            if cond.is_empty() {
                format!("{}({out})", latex_prefix("P", &t.pop))
            } else {
                format!("{}({out} \\mid {cond})", latex_prefix("P", &t.pop))
            }
        }
        ProbExpr::Sum { over, body } => {
            let idx = over.iter().map(sym_lower).collect::<Vec<_>>().join(",");
            format!("\\sum_{{{idx}}} {}", latex_factor(body))
        }
        ProbExpr::Product(fs) => fs.iter().map(latex_factor).collect::<Vec<_>>().join(" "),
        ProbExpr::Quotient(a, b) => format!("\\frac{{{}}}{{{}}}", latex(a), latex(b)),
        ProbExpr::Difference(a, b) => {
            let rhs = if matches!(**b, ProbExpr::Difference(..)) { format!("\\left[{}\\right]", latex(b)) } else { latex(b) };
            format!("{} - {rhs}", latex(a))
        }
        ProbExpr::Expectation { var, of } => match simple_expectation(var, of) {
            Some(t) => {
                let cond = cond_text(t, slot_latex, "\\mathrm{do}");
                let head = latex_prefix("\\mathbb{E}", &t.pop);
                if cond.is_empty() {
                    format!("{head}[{}]", var.node)
                } else {
                    format!("{head}[{} \\mid {cond}]", var.node)
                }
            }
            None => format!("\\mathbb{{E}}_{{{}}}\\left[{}\\right]", sym_lower(var), latex(of)),
        },
    }
}

fn latex_factor(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Difference(..) => format!("\\left[{}\\right]", latex(e)),
        _ => latex(e),
    }
}

fn slot_structured(s: &Slot) -> String {
    match s.val {
        Val::Sym(p) => format!("{}{}", s.node, primes(p)),
        Val::Fixed(v) => format!("{}={v}", s.node),
    }
}

fn cond_structured(t: &ProbTerm) -> String {
    let mut parts: Vec<String> = t.given.iter().map(slot_structured).collect();
    if !t.dos.is_empty() {
        parts.push(format!("do({})", join(&t.dos, slot_structured)));
    }
    parts.join(", ")
}

fn structured(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Const(c) => c.to_string(),
        ProbExpr::Term(t) => {
            let cond = cond_structured(t);
            let out = join(&t.outcome, slot_structured);
            if cond.is_empty() {
                format!("P[{}]({out})", t.pop)
            } else {
                format!("P[{}]({out} | {cond})", t.pop)
            }
        }
        ProbExpr::Sum { over, body } => {
            let idx = over.iter().map(|s| format!("{}{}", s.node, primes(s.primes))).collect::<Vec<_>>().join(", ");
            format!("(sum{{{idx}}} {})", structured(body))
        }
        ProbExpr::Product(fs) => format!("prod({})", fs.iter().map(structured).collect::<Vec<_>>().join(", ")),
        ProbExpr::Quotient(a, b) => format!("({} / {})", structured(a), structured(b)),
        ProbExpr::Difference(a, b) => format!("({} - {})", structured(a), structured(b)),
        ProbExpr::Expectation { var, of } => match simple_expectation(var, of) {
            Some(t) if var.primes == 0 => {
                let cond = cond_structured(t);
                if cond.is_empty() {
                    format!("E[{}]({})", t.pop, var.node)
                } else {
                    format!("E[{}]({} | {cond})", t.pop, var.node)
                }
            }
            _ => format!("E{{{}{}}}({})", var.node, primes(var.primes), structured(of)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn text_shapes() {
        let e = parse_expr("sum{Z} P(Y | Z, do(X)) P[tgt](Z)").unwrap();
        assert_eq!(render(&e, Format::Text), "Σ_z P(y | do(x), z) P*(z)");
        let e = parse_expr("sum{W2, W3} P(W2, W3)").unwrap();
        assert_eq!(render(&e, Format::Text), "Σ_{w2,w3} P(w2, w3)");
        let e = parse_expr("sum{X'} P(Y | X', Z) P(X')").unwrap();
        assert_eq!(render(&e, Format::Text), "Σ_x' P(y | x', z) P(x')");
    }

    #[test]
    fn expectation_shapes() {
        let e = parse_expr("E(Y | X=1, M, W3) - E(Y | X=0, M, W3)").unwrap();
        assert_eq!(render(&e, Format::Text), "E(Y | X=1, m, w3) - E(Y | X=0, m, w3)");
        let e = parse_expr("E[h](Y | do(X=1))").unwrap();
        assert_eq!(render(&e, Format::Text), "E_h(Y | do(X=1))");
        assert_eq!(render(&e, Format::Latex), "\\mathbb{E}_{h}[Y \\mid \\mathrm{do}(X{=}1)]");
    }

    #[test]
    fn latex_term() {
        let e = parse_expr("sum{Z} P(Y | Z, do(X)) P[tgt](Z)").unwrap();
        assert_eq!(render(&e, Format::Latex), "\\sum_{z} P(y \\mid \\mathrm{do}(x), z) P^{*}(z)");
    }
}
