//! Layer sizing for CR-PNN II and the analytic multiply counts of both
//! structures.
//!
//! A CR-PNN II of order `L` over `n` inputs has one expanded layer, `l`
//! Taylor layers and one output layer, so `l + 2` weighted layers. The
//! expanded layer raises the input to the power `c`, and the orders add up as
//! `L = l + c + 1`. The largest order reachable with `l` Taylor layers is
//! `2l + 3` (at `c = l + 2`), so `l` is the smallest count `>= n` with
//! `2l + 3 >= L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizing record of a CR-PNN II network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyPlan {
    pub n: usize,
    pub m: usize,
    pub order: usize,
    pub taylor_layers: usize,
    pub power: usize,
    pub total_layers: usize,
}

impl TopologyPlan {
    /// Bias-augmented width `n + 1` of every hidden activation.
    pub fn width(&self) -> usize {
        self.n + 1
    }
}

/// Plans a CR-PNN II network of order `order` over `n` inputs and `m`
/// outputs.
///
/// Starts from `l = n` and grows `l` while `order > 2l + 3`.
pub fn plan_topology(n: usize, m: usize, order: usize) -> Result<TopologyPlan> {
    if n == 0 || m == 0 {
        return Err(Error::invalid(
            "input and output dimensions must be at least 1",
        ));
    }
    if order < n + 2 {
        return Err(Error::Topology { n, order });
    }
    let taylor_layers = n.max(order.saturating_sub(3).div_ceil(2));
    let power = order - taylor_layers - 1;
    debug_assert!(power >= 1 && power <= taylor_layers + 2);
    Ok(TopologyPlan {
        n,
        m,
        order,
        taylor_layers,
        power,
        total_layers: taylor_layers + 2,
    })
}

/// Network order reached by `taylor_layers` Taylor layers and an expanded
/// layer of power `power`.
pub fn order_of(taylor_layers: usize, power: usize) -> Result<usize> {
    if taylor_layers == 0 {
        return Err(Error::invalid("at least one Taylor layer is required"));
    }
    if power == 0 || power > taylor_layers + 2 {
        return Err(Error::PowerOutOfRange {
            taylor_layers,
            power,
        });
    }
    Ok(taylor_layers + power + 1)
}

/// Exact per-sample forward multiply count of CR-PNN I:
/// `(L-1)[(n+1)^2 + (n+1)] + m(n+1)`.
pub fn mult_count_crpnn1(n: usize, m: usize, order: usize) -> u64 {
    let w = (n + 1) as u64;
    let hidden = order.saturating_sub(1) as u64;
    hidden * (w * w + w) + m as u64 * w
}

/// Exact per-sample forward multiply count of CR-PNN II:
/// `(n+1)^2 + c(n+1) + l[(n+1)^2 + (n+1)] + m(n+1)`.
pub fn mult_count_crpnn2(n: usize, m: usize, order: usize) -> Result<u64> {
    let plan = plan_topology(n, m, order)?;
    let w = (n + 1) as u64;
    let (l, c) = (plan.taylor_layers as u64, plan.power as u64);
    Ok(w * w + c * w + l * (w * w + w) + m as u64 * w)
}

/// Multiplies saved per sample by CR-PNN II over CR-PNN I at equal order:
/// `[L - (l+2)](n+1)^2`.
pub fn savings(n: usize, m: usize, order: usize) -> Result<u64> {
    let plan = plan_topology(n, m, order)?;
    let w = (n + 1) as u64;
    Ok((order - plan.total_layers) as u64 * w * w)
}

/// Weighted-layer counts `(CR-PNN I, CR-PNN II)` at the same order.
///
/// CR-PNN I uses `L - 1` hidden layers plus an output layer.
pub fn layer_count_compare(n: usize, order: usize) -> Result<(usize, usize)> {
    let plan = plan_topology(n, 1, order)?;
    Ok((order, plan.total_layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The sizing algorithm, executed literally.
    fn trace_loop(n: usize, order: usize) -> usize {
        let mut l = n;
        while order > 2 * l + 3 {
            l += 1;
        }
        l
    }

    #[test]
    fn plan_examples() {
        let p = plan_topology(5, 1, 7).unwrap();
        assert_eq!((p.taylor_layers, p.power, p.total_layers), (5, 1, 7));
        let p = plan_topology(5, 1, 14).unwrap();
        assert_eq!((p.taylor_layers, p.power, p.total_layers), (6, 7, 8));
        let p = plan_topology(1, 1, 5).unwrap();
        assert_eq!((p.taylor_layers, p.power, p.total_layers), (1, 3, 3));
    }

    #[test]
    fn plan_rejects_low_orders() {
        let err = plan_topology(2, 1, 3).unwrap_err();
        assert!(matches!(err, Error::Topology { n: 2, order: 3 }));
        assert!(err.to_string().contains("use CR-PNN I"));
        assert!(plan_topology(0, 1, 5).is_err());
    }

    #[test]
    fn plan_matches_loop_trace() {
        for n in 1..=10 {
            for order in n + 2..=40 {
                let p = plan_topology(n, 1, order).unwrap();
                assert_eq!(p.taylor_layers, trace_loop(n, order), "n={n} L={order}");
                assert_eq!(p.order, p.taylor_layers + p.power + 1);
                assert!(p.power >= 1 && p.power <= p.taylor_layers + 2);
            }
        }
    }

    #[test]
    fn order_formula() {
        assert_eq!(order_of(6, 7).unwrap(), 14);
        assert_eq!(order_of(6, 8).unwrap(), 2 * 6 + 3);
        assert_eq!(order_of(1, 1).unwrap(), 3);
        assert!(matches!(order_of(6, 9), Err(Error::PowerOutOfRange { .. })));
        assert!(order_of(3, 0).is_err());
    }

    #[test]
    fn count_examples() {
        assert_eq!(mult_count_crpnn1(5, 1, 14), 552);
        assert_eq!(mult_count_crpnn1(1, 1, 2), 8);
        assert_eq!(mult_count_crpnn1(4, 3, 1), 15);
        assert_eq!(mult_count_crpnn2(5, 1, 14).unwrap(), 336);
        assert_eq!(mult_count_crpnn2(1, 1, 5).unwrap(), 18);
        assert_eq!(savings(5, 1, 14).unwrap(), 216);
    }

    #[test]
    fn savings_is_the_count_gap() {
        for n in 1..=8 {
            for m in 1..=3 {
                for order in n + 2..=30 {
                    let one = mult_count_crpnn1(n, m, order);
                    let two = mult_count_crpnn2(n, m, order).unwrap();
                    assert!(two <= one);
                    assert_eq!(one - two, savings(n, m, order).unwrap());
                }
            }
        }
    }

    #[test]
    fn layer_counts() {
        assert_eq!(layer_count_compare(5, 14).unwrap(), (14, 8));
        assert_eq!(layer_count_compare(5, 7).unwrap(), (7, 7));
        assert_eq!(layer_count_compare(1, 5).unwrap(), (5, 3));
    }
}
