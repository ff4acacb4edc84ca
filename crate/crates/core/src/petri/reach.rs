//! Exhaustive untimed reachability, used as a brute-force oracle.

use std::collections::{BTreeSet, VecDeque};

use super::engine::{capacity_ok, guard_holds, search};
use super::net::{Marking, Net, UntimedMarking};
use super::value::Value;
use super::KernelError;

/// Every marking reachable from `initial` when time is ignored and each random
/// draw may go either way. Fails once more than `bound` markings are found.
pub fn reachable_markings(
    net: &Net,
    initial: &Marking,
    bound: usize,
) -> Result<BTreeSet<UntimedMarking>, KernelError> {
    let start = initial.untimed();
    let mut seen = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    if seen.len() > bound {
        return Err(KernelError::BoundExceeded { bound });
    }
    while let Some(m) = queue.pop_front() {
        for succ in successors(net, &m)? {
            if seen.insert(succ.clone()) {
                if seen.len() > bound {
                    return Err(KernelError::BoundExceeded { bound });
                }
                queue.push_back(succ);
            }
        }
    }
    Ok(seen)
}

/// Untimed successors of `m` over all transitions, bindings and draw outcomes.
pub fn successors(net: &Net, m: &UntimedMarking) -> Result<Vec<UntimedMarking>, KernelError> {
    let mut out = Vec::new();
    for t in &net.transitions {
        for (env, tokens) in search(t, m) {
            if !guard_holds(t, &env)? || !capacity_ok(net, t, m, &tokens) {
                continue;
            }
            let mut base = m.clone();
            for (place, color, n) in &tokens {
                base.remove(*place, color, *n);
            }
            // One list of possible colors per produced token.
            let mut choices: Vec<(usize, Vec<Value>)> = Vec::new();
            for arc in &t.outputs {
                let opts = arc.expr.outcomes(&env).map_err(|e| KernelError::Eval {
                    transition: t.def.id.clone(),
                    message: e.to_string(),
                })?;
                for _ in 0..arc.count {
                    choices.push((arc.place, opts.clone()));
                }
            }
            let mut partial = vec![base];
            for (place, opts) in &choices {
                let mut next = Vec::with_capacity(partial.len() * opts.len());
                for m in &partial {
                    for v in opts {
                        net.check_color(*place, v)?;
                        let mut m2 = m.clone();
                        m2.add(*place, v.clone(), 1);
                        next.push(m2);
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
    }
    Ok(out)
}
