//! Wide one-dimensional convolution over (multi-channel) hidden-state maps
//! and max-over-time pooling.
//!
//! A filter of window `l` slides over the input padded with `l − 1` zero
//! columns on each side, so a length-`s` sequence yields `s + l − 1`
//! activations. With `c` channels the filter spans `c × d × l` weights and
//! sums over all three axes before the bias and nonlinearity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{conv, init_uniform, Activation, Matrix, Tape, Var};

/// Half-width of the uniform filter initializer.
pub const FILTER_INIT_HALF_WIDTH: f64 = 0.01;

/// A single filter with weights indexed `[channel][feature][offset]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    channels: usize,
    dim: usize,
    window: usize,
    weights: Vec<f64>,
    pub bias: f64,
}

impl Filter {
    pub fn new(channels: usize, dim: usize, window: usize, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if window < 1 {
            return Err(Error::domain("filter window must be at least 1"));
        }
        if channels < 1 || dim < 1 {
            return Err(Error::domain("filter needs at least one channel and feature"));
        }
        if weights.len() != channels * dim * window {
            return Err(Error::Contract(format!(
                "filter {channels}x{dim}x{window} needs {} weights, got {}",
                channels * dim * window,
                weights.len()
            )));
        }
        Ok(Filter {
            channels,
            dim,
            window,
            weights,
            bias,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Weight at channel `r`, feature `i`, window offset `j`.
    pub fn weight(&self, r: usize, i: usize, j: usize) -> f64 {
        self.weights[(r * self.dim + i) * self.window + j]
    }

    /// Row vector in the unrolled layout used by [`conv::im2col`].
    fn unrolled(&self) -> Matrix {
        let (c, d, l) = (self.channels, self.dim, self.window);
        let mut row = vec![0.0; c * l * d];
        for r in 0..c {
            for i in 0..d {
                for j in 0..l {
                    row[(r * l + j) * d + i] = self.weight(r, i, j);
                }
            }
        }
        Matrix::from_vec(1, c * l * d, row).expect("sized above")
    }
}

/// Single-channel wide convolution of a `d × s` map.
pub fn wide_conv(h: &Matrix, filter: &Filter, act: Activation) -> Result<Vec<f64>> {
    if filter.channels != 1 {
        return Err(Error::domain(format!(
            "single-channel convolution with a {}-channel filter",
            filter.channels
        )));
    }
    wide_conv_multichannel(std::slice::from_ref(h), filter, act)
}

/// Multi-channel wide convolution; every map is `d × s`.
pub fn wide_conv_multichannel(maps: &[Matrix], filter: &Filter, act: Activation) -> Result<Vec<f64>> {
    if maps.len() != filter.channels {
        return Err(Error::Dimension {
            op: "wide_conv_multichannel",
            left: (maps.len(), 0),
            right: (filter.channels, 0),
        });
    }
    let refs: Vec<&Matrix> = maps.iter().collect();
    if refs[0].rows() != filter.dim {
        return Err(Error::Dimension {
            op: "wide_conv_multichannel",
            left: refs[0].shape(),
            right: (filter.dim, filter.window),
        });
    }
    let cols = conv::im2col(&refs, filter.window)?;
    let pre = filter.unrolled().matmul(&cols)?;
    Ok(pre.as_slice().iter().map(|&v| act.apply(v + filter.bias)).collect())
}

/// Largest activation in a feature map.
pub fn max_over_time(feature_map: &[f64]) -> Result<f64> {
    if feature_map.is_empty() {
        return Err(Error::domain("max over an empty feature map"));
    }
    Ok(feature_map[crate::numerics::argmax(feature_map)])
}

/// Filter counts per window size, e.g. `3:100,4:100,5:100`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterSpec(Vec<(usize, usize)>);

impl FilterSpec {
    pub fn new(mut groups: Vec<(usize, usize)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::domain("filter spec has no groups"));
        }
        groups.sort_by_key(|g| g.0);
        for w in groups.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::domain(format!("window size {} listed twice", w[0].0)));
            }
        }
        if groups.iter().any(|&(l, n)| l < 1 || n < 1) {
            return Err(Error::domain("window sizes and counts must be at least 1"));
        }
        Ok(FilterSpec(groups))
    }

    pub fn groups(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|g| g.1).sum()
    }

    pub fn max_window(&self) -> usize {
        self.0.iter().map(|g| g.0).max().unwrap_or(0)
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec(vec![(3, 100), (4, 100), (5, 100)])
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let groups = s
            .split(',')
            .map(|part| {
                let (l, n) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("filter group {part:?} is not WINDOW:COUNT")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("filter group {part:?} is not WINDOW:COUNT")))
                };
                Ok((parse(l)?, parse(n)?))
            })
            .collect::<Result<Vec<_>>>()?;
        FilterSpec::new(groups)
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, n)| format!("{l}:{n}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Filters sharing one window size, stored unrolled: `weight` is
/// `count × (c·l·d)`, `bias` is `count × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterGroup {
    pub window: usize,
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub channels: usize,
    pub dim: usize,
    pub groups: Vec<FilterGroup>,
    pub activation: Activation,
}

/// Tape handles for a bound [`FilterBank`].
#[derive(Clone, Debug)]
pub struct BankVars {
    groups: Vec<(usize, Var, Var)>,
}

impl FilterBank {
    pub fn new(channels: usize, dim: usize, spec: &FilterSpec, activation: Activation, seed: u64) -> Result<Self> {
        let groups = spec
            .groups()
            .iter()
            .map(|&(window, count)| {
                let seed = crate::numerics::sub_seed(seed, &format!("filters{window}"));
                Ok(FilterGroup {
                    window,
                    weight: init_uniform(count, channels * window * dim, FILTER_INIT_HALF_WIDTH, seed)?,
                    bias: Matrix::zeros(count, 1),
                })
            })
            .collect::<Result<_>>()?;
        Ok(FilterBank {
            channels,
            dim,
            groups,
            activation,
        })
    }

    /// Pooled feature dimension (one per filter).
    pub fn output_dim(&self) -> usize {
        self.groups.iter().map(|g| g.weight.rows()).sum()
    }

    pub fn spec(&self) -> FilterSpec {
        FilterSpec(self.groups.iter().map(|g| (g.window, g.weight.rows())).collect())
    }

    /// The `k`-th filter of group `g` as a standalone [`Filter`].
    pub fn filter(&self, g: usize, k: usize) -> Filter {
        let group = &self.groups[g];
        let (c, d, l) = (self.channels, self.dim, group.window);
        let row = group.weight.row(k);
        let mut weights = vec![0.0; c * d * l];
        for r in 0..c {
            for i in 0..d {
                for j in 0..l {
                    weights[(r * d + i) * l + j] = row[(r * l + j) * d + i];
                }
            }
        }
        Filter::new(c, d, l, weights, group.bias.get(k, 0)).expect("bank shapes are consistent")
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        self.groups
            .iter()
            .flat_map(|g| {
                [
                    (format!("w{}", g.window), &g.weight),
                    (format!("b{}", g.window), &g.bias),
                ]
            })
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.groups
            .iter_mut()
            .flat_map(|g| {
                let w = g.window;
                [(format!("w{w}"), &mut g.weight), (format!("b{w}"), &mut g.bias)]
            })
            .collect()
    }

    /// Binds the bank's parameters in [`FilterBank::named_params`] order.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> BankVars {
        BankVars {
            groups: self
                .groups
                .iter()
                .map(|g| (g.window, tape.param(&g.weight), tape.param(&g.bias)))
                .collect(),
        }
    }

    /// Convolve, activate and max-pool every filter; returns the pooled
    /// features as a column ordered by (window size, filter index).
    pub fn apply(&self, tape: &mut Tape<'_>, vars: &BankVars, maps: &[Var]) -> Result<Var> {
        if maps.len() != self.channels {
            return Err(Error::Dimension {
                op: "bank_apply",
                left: (maps.len(), 0),
                right: (self.channels, 0),
            });
        }
        let mut pooled = Vec::with_capacity(vars.groups.len());
        for &(window, w, b) in &vars.groups {
            let pre = tape.wide_conv(maps, w, b, window)?;
            let act = tape.map(pre, self.activation);
            pooled.push(tape.max_over_time(act)?);
        }
        if pooled.len() == 1 {
            Ok(pooled[0])
        } else {
            tape.concat_rows(&pooled)
        }
    }
}

/// Value-level bank application on plain matrices.
pub fn bank_apply(maps: &[Matrix], bank: &FilterBank) -> Result<Vec<f64>> {
    if maps.is_empty() {
        return Err(Error::domain("bank applied to zero channels"));
    }
    let mut tape = Tape::inference();
    let vars = bank.bind(&mut tape);
    let inputs: Vec<Var> = maps.iter().map(|m| tape.constant_ref(m)).collect();
    let out = bank.apply(&mut tape, &vars, &inputs)?;
    Ok(tape.value(out).as_slice().to_vec())
}
