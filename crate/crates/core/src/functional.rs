//! Bounded functionals of measure flows and events on them.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::math::clamp;
use crate::measure::MeasureFlow;

/// Regularity of a functional, used to pick optimizer step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    Lipschitz,
    Discontinuous,
}

pub type FlowFn = dyn Fn(&MeasureFlow) -> f64 + Send + Sync;
pub type FlowPredicate = dyn Fn(&MeasureFlow) -> bool + Send + Sync;

#[derive(Clone)]
pub enum FunctionalKind {
    Constant(f64),
    /// `clamp(scale · (m − offset), low, high)` with `m` the terminal barycenter coordinate.
    ClippedEndpointMean {
        coord: usize,
        scale: f64,
        offset: f64,
        low: f64,
        high: f64,
    },
    /// `min(cap, slope · (threshold − m)⁺)`: a bounded Lipschitz surrogate of
    /// the indicator penalty of `{m ≥ threshold}`.
    ShortfallPenalty {
        coord: usize,
        threshold: f64,
        slope: f64,
        cap: f64,
    },
    Custom(Arc<FlowFn>),
}

impl fmt::Debug for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalKind::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            FunctionalKind::ClippedEndpointMean {
                coord,
                scale,
                offset,
                low,
                high,
            } => f
                .debug_struct("ClippedEndpointMean")
                .field("coord", coord)
                .field("scale", scale)
                .field("offset", offset)
                .field("low", low)
                .field("high", high)
                .finish(),
            FunctionalKind::ShortfallPenalty {
                coord,
                threshold,
                slope,
                cap,
            } => f
                .debug_struct("ShortfallPenalty")
                .field("coord", coord)
                .field("threshold", threshold)
                .field("slope", slope)
                .field("cap", cap)
                .finish(),
            FunctionalKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A bounded map `F` from measure flows to the reals.
#[derive(Debug, Clone)]
pub struct Functional {
    kind: FunctionalKind,
    bound: f64,
    smoothness: Smoothness,
}

impl Functional {
    pub fn constant(value: f64) -> Self {
        Self {
            kind: FunctionalKind::Constant(value),
            bound: value.abs(),
            smoothness: Smoothness::Smooth,
        }
    }

    pub fn clipped_endpoint_mean(coord: usize, scale: f64, offset: f64, low: f64, high: f64) -> Result<Self> {
        if !(low <= high) || ![scale, offset, low, high].iter().all(|v| v.is_finite()) {
            return Err(invalid("functional", "clip bounds must be finite with low <= high"));
        }
        Ok(Self {
            kind: FunctionalKind::ClippedEndpointMean {
                coord,
                scale,
                offset,
                low,
                high,
            },
            bound: low.abs().max(high.abs()),
            smoothness: Smoothness::Lipschitz,
        })
    }

    pub fn shortfall_penalty(coord: usize, threshold: f64, slope: f64, cap: f64) -> Result<Self> {
        if !(slope > 0.0 && cap > 0.0 && threshold.is_finite() && slope.is_finite() && cap.is_finite()) {
            return Err(invalid("functional", "slope and cap must be positive and finite"));
        }
        Ok(Self {
            kind: FunctionalKind::ShortfallPenalty {
                coord,
                threshold,
                slope,
                cap,
            },
            bound: cap,
            smoothness: Smoothness::Lipschitz,
        })
    }

    pub fn custom(f: Arc<FlowFn>, bound: f64, smoothness: Smoothness) -> Self {
        Self {
            kind: FunctionalKind::Custom(f),
            bound,
            smoothness,
        }
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    /// Declared `‖F‖∞`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FunctionalKind::Constant(_))
    }

    /// Evaluates `F`, checking the declared bound.
    pub fn eval(&self, flow: &MeasureFlow) -> Result<f64> {
        let value = match &self.kind {
            FunctionalKind::Constant(c) => *c,
            FunctionalKind::ClippedEndpointMean {
                coord,
                scale,
                offset,
                low,
                high,
            } => clamp(scale * (terminal_mean(flow, *coord)? - offset), *low, *high),
            FunctionalKind::ShortfallPenalty {
                coord,
                threshold,
                slope,
                cap,
            } => (slope * (threshold - terminal_mean(flow, *coord)?).max(0.0)).min(*cap),
            FunctionalKind::Custom(f) => f(flow),
        };
        if !(value.abs() <= self.bound * (1.0 + 1e-12)) {
            return Err(Error::FunctionalBound {
                value,
                bound: self.bound,
            });
        }
        Ok(value)
    }
}

fn terminal_mean(flow: &MeasureFlow, coord: usize) -> Result<f64> {
    let mu = flow.terminal();
    if coord >= mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: coord + 1,
            found: mu.dim(),
        });
    }
    Ok(mu.barycenter_coord(coord))
}

/// An event on measure flows.
#[derive(Clone)]
pub enum Event {
    WholeSpace,
    /// `{m ≥ threshold}` with `m` the terminal barycenter coordinate.
    EndpointMeanAtLeast { coord: usize, threshold: f64 },
    Custom(Arc<FlowPredicate>),
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Event {
    pub fn occurs(&self, flow: &MeasureFlow) -> Result<bool> {
        match self {
            Event::WholeSpace => Ok(true),
            Event::EndpointMeanAtLeast { coord, threshold } => Ok(terminal_mean(flow, *coord)? >= *threshold),
            Event::Custom(p) => Ok(p(flow)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Event::WholeSpace => String::from("whole_space"),
            Event::EndpointMeanAtLeast { coord, threshold } => format!("endpoint_mean[{coord}] >= {threshold}"),
            Event::Custom(_) => String::from("custom"),
        }
    }

    /// A bounded surrogate penalty for steering controls toward the event.
    pub fn smoothed(&self, slope: f64, cap: f64) -> Result<Functional> {
        match self {
            Event::WholeSpace => Ok(Functional::constant(0.0)),
            Event::EndpointMeanAtLeast { coord, threshold } => Functional::shortfall_penalty(*coord, *threshold, slope, cap),
            Event::Custom(_) => Err(invalid("event", "custom events have no built-in smoothing")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::EmpiricalMeasure;
    use crate::simulate::TimeGrid;
    use alloc::vec;

    fn flow_ending_at(mean: f64) -> MeasureFlow {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let start = EmpiricalMeasure::uniform(1, vec![0.0, 0.0]).unwrap();
        let end = EmpiricalMeasure::uniform(1, vec![mean - 1.0, mean + 1.0]).unwrap();
        MeasureFlow::new(grid, vec![start, end]).unwrap()
    }

    #[test]
    fn clipped_mean_saturates() {
        let f = Functional::clipped_endpoint_mean(0, 0.25, 0.0, -0.3, 0.3).unwrap();
        assert!((f.eval(&flow_ending_at(0.4)).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(f.eval(&flow_ending_at(10.0)).unwrap(), 0.3);
        assert_eq!(f.bound(), 0.3);
    }

    #[test]
    fn shortfall_vanishes_on_event() {
        let event = Event::EndpointMeanAtLeast { coord: 0, threshold: 0.5 };
        let f = event.smoothed(10.0, 4.0).unwrap();
        assert_eq!(f.eval(&flow_ending_at(0.6)).unwrap(), 0.0);
        assert!((f.eval(&flow_ending_at(0.4)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(f.eval(&flow_ending_at(-3.0)).unwrap(), 4.0);
        assert!(event.occurs(&flow_ending_at(0.5)).unwrap());
    }

    #[test]
    fn custom_bound_is_enforced() {
        let f = Functional::custom(Arc::new(|_: &MeasureFlow| 2.0), 1.0, Smoothness::Smooth);
        assert!(matches!(f.eval(&flow_ending_at(0.0)), Err(Error::FunctionalBound { .. })));
    }
}
