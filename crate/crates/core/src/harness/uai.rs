//! Pairwise subset of the UAI `MARKOV` format.
//!
//! Factor values are probabilities; energies are their negative logs.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::Model;

const VALUE_FLOOR: f64 = 1e-300;

struct Tokens<'a> {
    inner: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of input, expected {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let t = self.next(what)?;
        t.parse()
            .map_err(|_| Error::Parse(format!("expected {what}, found {t:?}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => Err(Error::Parse(format!("expected {what}, found {t:?}"))),
        }
    }
}

pub fn parse_uai(text: &str) -> Result<Model> {
    let mut tok = Tokens {
        inner: text.split_whitespace(),
    };
    let head = tok.next("preamble")?;
    if head != "MARKOV" {
        return Err(Error::Parse(format!("expected MARKOV preamble, found {head:?}")));
    }
    let n = tok.usize("variable count")?;
    let cards = (0..n)
        .map(|i| {
            let k = tok.usize("cardinality")?;
            if k == 0 {
                return Err(Error::Parse(format!("variable {i} has cardinality 0")));
            }
            Ok(k)
        })
        .collect::<Result<Vec<_>>>()?;
    let f = tok.usize("factor count")?;
    let mut scopes = Vec::with_capacity(f);
    for a in 0..f {
        let arity = tok.usize("factor arity")?;
        if arity == 0 || arity > 2 {
            return Err(Error::Parse(format!(
                "factor {a} has arity {arity}; only unary and pairwise factors are supported"
            )));
        }
        let scope = (0..arity)
            .map(|_| {
                let v = tok.usize("variable index")?;
                if v >= n {
                    return Err(Error::Parse(format!("factor {a} references variable {v} of {n}")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        if arity == 2 && scope[0] == scope[1] {
            return Err(Error::Parse(format!("factor {a} repeats variable {}", scope[0])));
        }
        scopes.push(scope);
    }

    let mut unaries: Vec<Vec<f64>> = cards.iter().map(|&k| vec![0.0; k]).collect();
    // keyed by (low, high), tables stored with the low variable as the row
    let mut pairs: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (a, scope) in scopes.iter().enumerate() {
        let size: usize = scope.iter().map(|&v| cards[v]).product();
        let count = tok.usize("table size")?;
        if count != size {
            return Err(Error::Parse(format!("factor {a} declares {count} values, scope needs {size}")));
        }
        let energies = (0..count)
            .map(|_| tok.f64("nonnegative factor value").map(|v| -v.max(VALUE_FLOOR).ln()))
            .collect::<Result<Vec<_>>>()?;
        match scope[..] {
            [i] => unaries[i].iter_mut().zip(&energies).for_each(|(u, e)| *u += e),
            [i, j] => {
                let (lo, hi) = (i.min(j), i.max(j));
                let table = pairs.entry((lo, hi)).or_insert_with(|| vec![0.0; size]);
                for xi in 0..cards[i] {
                    for xj in 0..cards[j] {
                        let e = energies[xi * cards[j] + xj];
                        let idx = if i < j {
                            xi * cards[j] + xj
                        } else {
                            xj * cards[i] + xi
                        };
                        table[idx] += e;
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    if let Some(t) = tok.inner.next() {
        return Err(Error::Parse(format!("trailing token {t:?}")));
    }
    let edges = pairs.into_iter().map(|((i, j), t)| (i, j, t)).collect();
    Model::new(unaries, edges).map_err(|e| Error::Parse(e.to_string()))
}

/// One unary factor per node, then one pairwise factor per edge.
pub fn emit_uai(model: &Model) -> String {
    let mut out = String::new();
    let n = model.num_nodes();
    let cards: Vec<String> = model.cardinalities().iter().map(|k| k.to_string()).collect();
    writeln!(out, "MARKOV\n{n}\n{}\n{}", cards.join(" "), n + model.num_edges()).unwrap();
    for i in 0..n {
        writeln!(out, "1 {i}").unwrap();
    }
    for e in model.edges() {
        writeln!(out, "2 {} {}", e.i(), e.j()).unwrap();
    }
    let mut table = |values: &[f64]| {
        let vals: Vec<String> = values.iter().map(|t| format!("{:e}", (-t).exp())).collect();
        writeln!(out, "\n{}\n{}", values.len(), vals.join(" ")).unwrap();
    };
    for u in model.unaries() {
        table(u);
    }
    for e in model.edges() {
        table(e.table());
    }
    out
}
