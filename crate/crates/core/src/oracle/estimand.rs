use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use thiserror::Error;

use super::{DiscreteScm, Dist, ScmError};
use crate::expr::{ProbExpr, ProbTerm, Slot, Sym, Val, SOURCE};
use crate::scalar::Prob;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("population `{0}` has no model bound")]
    UnboundPopulation(String),
    #[error("symbol `{0}` is not bound")]
    UnboundSymbol(String),
    #[error("zero denominator at {context}")]
    ZeroDenominator { context: String },
    #[error(transparent)]
    Scm(#[from] ScmError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalResult<T> {
    Number(T),
    /// Values indexed by the expression's free variables.
    Dist(Dist<T>),
}

impl<T: Prob> EvalResult<T> {
    pub fn number(&self) -> Option<&T> {
        match self {
            EvalResult::Number(x) => Some(x),
            EvalResult::Dist(_) => None,
        }
    }
}

type CacheKey = (String, Vec<(String, u32)>, Vec<String>);

/// Models bound to population tags, with a cache of marginals.
pub struct PopEnv<'a, T> {
    models: BTreeMap<String, &'a DiscreteScm<T>>,
    cache: RefCell<HashMap<CacheKey, Rc<Dist<T>>>>,
}

impl<'a, T: Prob> PopEnv<'a, T> {
    pub fn new() -> Self {
        PopEnv { models: BTreeMap::new(), cache: RefCell::new(HashMap::new()) }
    }

    /// One model bound to the source tag.
    pub fn single(m: &'a DiscreteScm<T>) -> Self {
        PopEnv::new().bind(SOURCE, m)
    }

    pub fn bind(mut self, pop: &str, m: &'a DiscreteScm<T>) -> Self {
        self.models.insert(pop.to_string(), m);
        self
    }

    fn model(&self, pop: &str) -> Result<&'a DiscreteScm<T>, EvalError> {
        self.models.get(pop).copied().ok_or_else(|| EvalError::UnboundPopulation(pop.to_string()))
    }

    fn card(&self, node: &str) -> Result<u32, EvalError> {
        self.models
            .values()
            .find_map(|m| m.card(node))
            .ok_or_else(|| EvalError::Scm(ScmError::Graph(crate::graph::GraphError::UnknownNode(node.to_string()))))
    }

    fn marginal(&self, pop: &str, dos: Vec<(String, u32)>, mut vars: Vec<String>) -> Result<Rc<Dist<T>>, EvalError> {
        vars.sort();
        let key = (pop.to_string(), dos, vars);
        if let Some(d) = self.cache.borrow().get(&key) {
            return Ok(d.clone());
        }
        let m = self.model(pop)?;
        let dos: Vec<(&str, u32)> = key.1.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        let vars: Vec<&str> = key.2.iter().map(String::as_str).collect();
        let d = Rc::new(m.eval_interventional(&dos, &vars)?);
        self.cache.borrow_mut().insert(key, d.clone());
        Ok(d)
    }

    fn term(&self, t: &ProbTerm, env: &BTreeMap<Sym, u32>) -> Result<T, EvalError> {
        let value = |s: &Slot| -> Result<u32, EvalError> {
            match s.val {
                Val::Fixed(v) => Ok(v),
                Val::Sym(p) => {
                    let sym = Sym::primed(s.node.clone(), p);
                    env.get(&sym).copied().ok_or_else(|| EvalError::UnboundSymbol(format!("{}{}", s.node, "'".repeat(p as usize))))
                }
            }
        };
        let mut dos = t.dos.iter().map(|s| Ok((s.node.clone(), value(s)?))).collect::<Result<Vec<_>, EvalError>>()?;
        dos.sort();
        let mut joint: Vec<(String, u32)> = Vec::new();
        for s in t.outcome.iter().chain(&t.given) {
            joint.push((s.node.clone(), value(s)?));
        }
        joint.sort();
        let names: Vec<String> = joint.iter().map(|(n, _)| n.clone()).collect();
        let vals: Vec<u32> = joint.iter().map(|(_, v)| *v).collect();
        let num = self.marginal(&t.pop, dos.clone(), names)?.get(&vals);
        if t.given.is_empty() {
            return Ok(num);
        }
        let mut given: Vec<(String, u32)> = t.given.iter().map(|s| Ok((s.node.clone(), value(s)?))).collect::<Result<_, EvalError>>()?;
        given.sort();
        let gvals: Vec<u32> = given.iter().map(|(_, v)| *v).collect();
        let den = self.marginal(&t.pop, dos.clone(), given.iter().map(|(n, _)| n.clone()).collect())?.get(&gvals);
        if den.is_zero() {
            let ctx: Vec<String> = given.iter().chain(&dos).map(|(n, v)| format!("{n}={v}")).collect();
            return Err(EvalError::ZeroDenominator { context: format!("{}({})", t.pop, ctx.join(", ")) });
        }
        Ok(num / den)
    }

    fn eval(&self, e: &ProbExpr, env: &mut BTreeMap<Sym, u32>) -> Result<T, EvalError> {
        match e {
            ProbExpr::Const(c) => Ok(T::from_i64(*c)),
            ProbExpr::Term(t) => self.term(t, env),
            ProbExpr::Sum { over, body } => {
                let cards = over.iter().map(|s| self.card(&s.node)).collect::<Result<Vec<_>, _>>()?;
                let saved: Vec<Option<u32>> = over.iter().map(|s| env.get(s).copied()).collect();
                let mut total = T::zero();
                let mut vals = vec![0u32; over.len()];
                'outer: loop {
                    for (s, &v) in over.iter().zip(&vals) {
                        env.insert(s.clone(), v);
                    }
                    total = total + self.eval(body, env)?;
                    for i in (0..vals.len()).rev() {
                        vals[i] += 1;
                        if vals[i] < cards[i] {
                            continue 'outer;
                        }
                        vals[i] = 0;
                    }
                    break;
                }
                for (s, old) in over.iter().zip(saved) {
                    match old {
                        Some(v) => env.insert(s.clone(), v),
                        None => env.remove(s),
                    };
                }
                Ok(total)
            }
            ProbExpr::Product(fs) => {
                let mut acc = T::one();
                for f in fs {
                    acc = acc * self.eval(f, env)?;
                }
                Ok(acc)
            }
            ProbExpr::Quotient(a, b) => {
                let den = self.eval(b, env)?;
                if den.is_zero() {
                    let ctx: Vec<String> = env.iter().map(|(s, v)| format!("{}={v}", s.node)).collect();
                    return Err(EvalError::ZeroDenominator { context: ctx.join(", ") });
                }
                Ok(self.eval(a, env)? / den)
            }
            ProbExpr::Difference(a, b) => Ok(self.eval(a, env)? - self.eval(b, env)?),
            ProbExpr::Expectation { var, of } => {
                let card = self.card(&var.node)?;
                let old = env.get(var).copied();
                let mut total = T::zero();
                for v in 0..card {
                    env.insert(var.clone(), v);
                    total = total + T::from_i64(v as i64) * self.eval(of, env)?;
                }
                match old {
                    Some(v) => env.insert(var.clone(), v),
                    None => env.remove(var),
                };
                Ok(total)
            }
        }
    }

    /// Evaluates with the given free-symbol assignment.
    pub fn eval_at(&self, e: &ProbExpr, assignment: &BTreeMap<Sym, u32>) -> Result<T, EvalError> {
        self.eval(e, &mut assignment.clone())
    }
}

impl<'a, T: Prob> Default for PopEnv<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// A number for closed expressions, otherwise a table over the free symbols.
pub fn eval_estimand<T: Prob>(e: &ProbExpr, env: &PopEnv<'_, T>) -> Result<EvalResult<T>, EvalError> {
    let free: Vec<Sym> = e.free_syms().into_iter().collect();
    if free.is_empty() {
        return Ok(EvalResult::Number(env.eval(e, &mut BTreeMap::new())?));
    }
    let cards = free.iter().map(|s| env.card(&s.node)).collect::<Result<Vec<_>, _>>()?;
    let mut table = BTreeMap::new();
    let mut vals = vec![0u32; free.len()];
    'outer: loop {
        let mut a: BTreeMap<Sym, u32> = free.iter().cloned().zip(vals.iter().copied()).collect();
        table.insert(vals.clone(), env.eval(e, &mut a)?);
        for i in (0..vals.len()).rev() {
            vals[i] += 1;
            if vals[i] < cards[i] {
                continue 'outer;
            }
            vals[i] = 0;
        }
        break;
    }
    let vars = free.iter().map(|s| format!("{}{}", s.node, "'".repeat(s.primes as usize))).collect();
    Ok(EvalResult::Dist(Dist { vars, table }))
}
