use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CorrespondenceError;
use crate::numerics::{Matrix, Real};

/// Convolution with stride equal to the kernel and no zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        height: usize,
        width: usize,
        out_channels: usize,
        kernel: (usize, usize),
    ) -> Result<Self, CorrespondenceError> {
        let spec = Self {
            in_channels,
            height,
            width,
            out_channels,
            kernel,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorrespondenceError> {
        let (k1, k2) = self.kernel;
        if self.in_channels == 0 || self.out_channels == 0 || k1 == 0 || k2 == 0 {
            return Err(CorrespondenceError::EmptyDimension);
        }
        if self.height % k1 != 0 || self.width % k2 != 0 || self.height == 0 || self.width == 0 {
            return Err(CorrespondenceError::Indivisible {
                height: self.height,
                width: self.width,
                kernel: self.kernel,
            });
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        self.height / self.kernel.0
    }

    pub fn out_width(&self) -> usize {
        self.width / self.kernel.1
    }

    /// Number of output positions H′·W′.
    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.positions()
    }

    /// Receptive field size C_i·k₁·k₂, the fan-in of one output unit.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }
}

/// Whether tied positions share parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Locally connected: every output position owns its kernel.
    Lc,
    /// Convolution: one kernel shared by all output positions.
    Cnn,
}

impl std::fmt::Display for TieMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieMode::Lc => "lc",
            TieMode::Cnn => "cnn",
        })
    }
}

/// First-layer variants compared by [`count_params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerVariant {
    Cnn,
    Lc,
    Mlp,
}

/// Sparsity mask and tie groups of a conv/LC layer embedded in a
/// `(C_o·H′·W′) × (C_i·H·W)` dense matrix.
///
/// Rows are indexed `o·H′W′ + y′W′ + x′` and columns `c·HW + yW + x`.
/// Entries are stored in ascending flat (row-major) order, which also makes
/// each row's entries ascending in `(c, dy, dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TieMap {
    spec: ConvSpec,
    mode: TieMode,
    /// Flat dense index of every active entry.
    entries: Vec<usize>,
    /// Column of every active entry.
    entry_cols: Vec<usize>,
    /// Tie group of every active entry.
    entry_group: Vec<usize>,
    /// CSR row pointers into `entries`.
    row_ptr: Vec<usize>,
    /// Group members as flat dense indices, ascending.
    groups: Vec<Vec<usize>>,
    /// Bias tie group of every row.
    bias_group: Vec<usize>,
    bias_groups: usize,
}

/// Builds the mask and tie groups for `spec` in `mode`.
pub fn toeplitz_layout(spec: &ConvSpec, mode: TieMode) -> Result<TieMap, CorrespondenceError> {
    spec.validate()?;
    let (k1, k2) = spec.kernel;
    let (oh, ow) = (spec.out_height(), spec.out_width());
    let positions = spec.positions();
    let cols = spec.input_len();
    let rows = spec.output_len();
    let fan_in = spec.fan_in();
    let group_count = match mode {
        TieMode::Cnn => spec.out_channels * fan_in,
        TieMode::Lc => rows * fan_in,
    };

    let mut entries = Vec::with_capacity(rows * fan_in);
    let mut entry_cols = Vec::with_capacity(rows * fan_in);
    let mut entry_group = Vec::with_capacity(rows * fan_in);
    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut groups = vec![Vec::new(); group_count];
    let mut bias_group = Vec::with_capacity(rows);
    row_ptr.push(0);
    for o in 0..spec.out_channels {
        for yo in 0..oh {
            for xo in 0..ow {
                let row = o * positions + yo * ow + xo;
                for c in 0..spec.in_channels {
                    for dy in 0..k1 {
                        for dx in 0..k2 {
                            let (y, x) = (yo * k1 + dy, xo * k2 + dx);
                            let col = c * spec.height * spec.width + y * spec.width + x;
                            let kernel_index = (c * k1 + dy) * k2 + dx;
                            let group = match mode {
                                TieMode::Cnn => o * fan_in + kernel_index,
                                TieMode::Lc => row * fan_in + kernel_index,
                            };
                            let flat = row * cols + col;
                            entries.push(flat);
                            entry_cols.push(col);
                            entry_group.push(group);
                            groups[group].push(flat);
                        }
                    }
                }
                row_ptr.push(entries.len());
                bias_group.push(match mode {
                    TieMode::Cnn => o,
                    TieMode::Lc => row,
                });
            }
        }
    }
    let bias_groups = match mode {
        TieMode::Cnn => spec.out_channels,
        TieMode::Lc => rows,
    };
    Ok(TieMap {
        spec: *spec,
        mode,
        entries,
        entry_cols,
        entry_group,
        row_ptr,
        groups,
        bias_group,
        bias_groups,
    })
}

impl TieMap {
    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn mode(&self) -> TieMode {
        self.mode
    }

    /// Dense shape `(C_o·H′·W′, C_i·H·W)`.
    pub fn dense_shape(&self) -> (usize, usize) {
        (self.spec.output_len(), self.spec.input_len())
    }

    pub fn active_count(&self) -> usize {
        self.entries.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn is_active(&self, row: usize, col: usize) -> bool {
        let cols = self.dense_shape().1;
        self.row_entries(row)
            .any(|(flat, _)| flat == row * cols + col)
    }

    /// `(flat index, column)` of the active entries of `row`.
    pub fn row_entries(&self, row: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.entries[range.clone()]
            .iter()
            .copied()
            .zip(self.entry_cols[range].iter().copied())
    }

    /// Active mask as a 0/1 matrix.
    pub fn mask<T: Real>(&self) -> Matrix<T> {
        let (rows, cols) = self.dense_shape();
        let mut m = Matrix::zeros(rows, cols);
        for &flat in &self.entries {
            m.as_mut_slice()[flat] = T::one();
        }
        m
    }

    pub fn bias_group_count(&self) -> usize {
        self.bias_groups
    }

    pub fn bias_group_of(&self, row: usize) -> usize {
        self.bias_group[row]
    }

    /// Sparse product `x · Wᵀ + b` that touches only active entries, summing
    /// each row's entries in ascending column order.
    pub(crate) fn forward<T: Real>(&self, weight: &Matrix<T>, bias: &[T], x: &Matrix<T>) -> Matrix<T> {
        let (rows, cols) = self.dense_shape();
        debug_assert_eq!(x.cols(), cols);
        let w = weight.as_slice();
        let mut out = Matrix::zeros(x.rows(), rows);
        for b in 0..x.rows() {
            let input = x.row(b);
            let dst = out.row_mut(b);
            for (r, d) in dst.iter_mut().enumerate() {
                let mut acc = T::zero();
                for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc = acc + w[self.entries[e]] * input[self.entry_cols[e]];
                }
                *d = acc + bias[r];
            }
        }
        out
    }

    /// Backward pass of [`TieMap::forward`]. Returns the dense weight gradient
    /// with tie-group sums broadcast to every member, the bias gradient tied
    /// the same way, and optionally the input gradient.
    pub(crate) fn backward<T: Real>(
        &self,
        weight: &Matrix<T>,
        x: &Matrix<T>,
        grad_out: &Matrix<T>,
        want_input_grad: bool,
    ) -> (Matrix<T>, Vec<T>, Option<Matrix<T>>) {
        let (rows, cols) = self.dense_shape();
        let w = weight.as_slice();
        let mut entry_grad = vec![T::zero(); self.entries.len()];
        let mut grad_x = want_input_grad.then(|| Matrix::zeros(x.rows(), cols));
        for b in 0..x.rows() {
            let input = x.row(b);
            let g = grad_out.row(b);
            for r in 0..rows {
                let gr = g[r];
                for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                    entry_grad[e] = entry_grad[e] + gr * input[self.entry_cols[e]];
                }
            }
            if let Some(gx) = grad_x.as_mut() {
                let dst = gx.row_mut(b);
                for r in 0..rows {
                    let gr = g[r];
                    for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                        let c = self.entry_cols[e];
                        dst[c] = dst[c] + w[self.entries[e]] * gr;
                    }
                }
            }
        }
        let mut dense = Matrix::zeros(rows, cols);
        for (&flat, &g) in self.entries.iter().zip(&entry_grad) {
            dense.as_mut_slice()[flat] = g;
        }
        let shared = tied_gradient_reduce(&dense, self).expect("shape checked above");
        let dense = self.scatter(&shared);

        let bias_raw = grad_out.column_sums();
        let mut bias_shared = vec![T::zero(); self.bias_groups];
        for (r, &g) in bias_raw.iter().enumerate() {
            let k = self.bias_group[r];
            bias_shared[k] = bias_shared[k] + g;
        }
        let bias = (0..rows).map(|r| bias_shared[self.bias_group[r]]).collect();
        (dense, bias, grad_x)
    }

    /// Scatters one value per tie group into a dense matrix; inactive
    /// entries are exactly zero.
    pub fn scatter<T: Real>(&self, shared: &[T]) -> Matrix<T> {
        let (rows, cols) = self.dense_shape();
        let mut m = Matrix::zeros(rows, cols);
        let data = m.as_mut_slice();
        for (&flat, &g) in self.entries.iter().zip(&self.entry_group) {
            data[flat] = shared[g];
        }
        m
    }

    /// Reads one value per tie group (its first member).
    pub fn gather<T: Real>(&self, dense: &Matrix<T>) -> Result<Vec<T>, CorrespondenceError> {
        self.check_dense_shape(dense.shape())?;
        Ok(self
            .groups
            .iter()
            .map(|members| dense.as_slice()[members[0]])
            .collect())
    }

    /// Expands per-group bias values to one value per dense row.
    pub fn scatter_bias<T: Real>(&self, shared: &[T]) -> Vec<T> {
        self.bias_group.iter().map(|&g| shared[g]).collect()
    }

    /// True when every tie group holds equal values and every inactive entry
    /// is zero.
    pub fn respects_ties<T: Real>(&self, dense: &Matrix<T>) -> bool {
        if dense.shape() != self.dense_shape() {
            return false;
        }
        let data = dense.as_slice();
        let ties = self.groups.iter().all(|members| {
            let first = data[members[0]];
            members.iter().all(|&m| data[m] == first)
        });
        let mut active = vec![false; data.len()];
        for &e in &self.entries {
            active[e] = true;
        }
        ties && data.iter().zip(&active).all(|(v, &a)| a || v.is_zero())
    }

    fn check_dense_shape(&self, shape: (usize, usize)) -> Result<(), CorrespondenceError> {
        if shape != self.dense_shape() {
            return Err(CorrespondenceError::ShapeMismatch {
                expected: self.dense_shape(),
                got: shape,
            });
        }
        Ok(())
    }

    /// Deterministic text export: a header line with the `ConvSpec`, then one line
    /// per tie group listing its flat dense indices.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let (rows, cols) = self.dense_shape();
        let mut out = String::new();
        let _ = writeln!(out, "tiemap v1");
        let _ = writeln!(
            out,
            "spec in_channels={} height={} width={} out_channels={} kernel={}x{} mode={}",
            s.in_channels, s.height, s.width, s.out_channels, s.kernel.0, s.kernel.1, self.mode
        );
        let _ = writeln!(
            out,
            "dense {rows}x{cols} active={} groups={}",
            self.entries.len(),
            self.groups.len()
        );
        for (g, members) in self.groups.iter().enumerate() {
            let _ = write!(out, "{g}:");
            for m in members {
                let _ = write!(out, " {m}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`TieMap::to_text`] output, rebuilding the layout from the
    /// header and checking the group lines against it.
    pub fn from_text(text: &str) -> Result<TieMap, CorrespondenceError> {
        let bad = |msg: &str| CorrespondenceError::Parse(msg.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("tiemap v1") {
            return Err(bad("missing 'tiemap v1' header"));
        }
        let spec_line = lines.next().ok_or_else(|| bad("missing spec line"))?;
        let mut fields = std::collections::HashMap::new();
        for tok in spec_line.split_whitespace().skip(1) {
            let (k, v) = tok.split_once('=').ok_or_else(|| bad("malformed spec field"))?;
            fields.insert(k, v);
        }
        let num = |k: &str| -> Result<usize, CorrespondenceError> {
            fields
                .get(k)
                .ok_or_else(|| bad(&format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(&format!("bad {k}")))
        };
        let (k1, k2) = fields
            .get("kernel")
            .and_then(|v| v.split_once('x'))
            .ok_or_else(|| bad("bad kernel"))?;
        let kernel = (
            k1.parse().map_err(|_| bad("bad kernel"))?,
            k2.parse().map_err(|_| bad("bad kernel"))?,
        );
        let mode = match fields.get("mode").copied() {
            Some("lc") => TieMode::Lc,
            Some("cnn") => TieMode::Cnn,
            _ => return Err(bad("bad mode")),
        };
        let spec = ConvSpec::new(
            num("in_channels")?,
            num("height")?,
            num("width")?,
            num("out_channels")?,
            kernel,
        )?;
        let map = toeplitz_layout(&spec, mode)?;
        lines.next().ok_or_else(|| bad("missing dense line"))?;
        let mut seen = 0;
        for (g, line) in lines.enumerate() {
            let (id, rest) = line.split_once(':').ok_or_else(|| bad("malformed group line"))?;
            if id.parse::<usize>().ok() != Some(g) {
                return Err(bad("group ids out of order"));
            }
            let members: Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
            let members = members.map_err(|_| bad("bad member index"))?;
            if map.groups.get(g) != Some(&members) {
                return Err(bad("group members disagree with the ConvSpec layout"));
            }
            seen += 1;
        }
        if seen != map.groups.len() {
            return Err(bad("group count mismatch"));
        }
        Ok(map)
    }
}

/// Sums the dense gradient over each tie group. Inactive entries are ignored.
pub fn tied_gradient_reduce<T: Real>(
    dense_grad: &Matrix<T>,
    map: &TieMap,
) -> Result<Vec<T>, CorrespondenceError> {
    map.check_dense_shape(dense_grad.shape())?;
    let data = dense_grad.as_slice();
    Ok(map
        .groups
        .iter()
        .map(|members| members.iter().fold(T::zero(), |acc, &m| acc + data[m]))
        .collect())
}

/// Weight count of the first layer for each variant (biases excluded).
pub fn count_params(spec: &ConvSpec, variant: LayerVariant) -> usize {
    match variant {
        LayerVariant::Cnn => spec.out_channels * spec.fan_in(),
        LayerVariant::Lc => spec.out_channels * spec.positions() * spec.fan_in(),
        LayerVariant::Mlp => spec.output_len() * spec.input_len(),
    }
}

/// Bias count of the first layer: one per channel for a convolution, one per
/// output unit otherwise.
pub fn count_biases(spec: &ConvSpec, variant: LayerVariant) -> usize {
    match variant {
        LayerVariant::Cnn => spec.out_channels,
        LayerVariant::Lc | LayerVariant::Mlp => spec.output_len(),
    }
}

/// Total parameters of the two-layer network `first layer → dense head`.
pub fn two_layer_param_count(spec: &ConvSpec, variant: LayerVariant, classes: usize) -> usize {
    count_params(spec, variant)
        + count_biases(spec, variant)
        + spec.output_len() * classes
        + classes
}

/// Number of kernel values `dense_from_conv` expects for `mode`.
pub fn kernel_len(spec: &ConvSpec, mode: TieMode) -> usize {
    match mode {
        TieMode::Cnn => count_params(spec, LayerVariant::Cnn),
        TieMode::Lc => count_params(spec, LayerVariant::Lc),
    }
}

/// Direct sliding-window convolution with stride equal to the kernel.
///
/// `kernel` is laid out `(C_o, C_i, k₁, k₂)` for [`TieMode::Cnn`] and
/// `(C_o, H′, W′, C_i, k₁, k₂)` for [`TieMode::Lc`]; `input` is `(C_i, H, W)`.
/// Output is `(C_o, H′, W′)` flattened.
pub fn conv_forward_oracle<T: Real>(
    spec: &ConvSpec,
    mode: TieMode,
    kernel: &[T],
    input: &[T],
) -> Result<Vec<T>, CorrespondenceError> {
    spec.validate()?;
    if kernel.len() != kernel_len(spec, mode) {
        return Err(CorrespondenceError::KernelLength {
            expected: kernel_len(spec, mode),
            got: kernel.len(),
        });
    }
    if input.len() != spec.input_len() {
        return Err(CorrespondenceError::InputLength {
            expected: spec.input_len(),
            got: input.len(),
        });
    }
    let (k1, k2) = spec.kernel;
    let (oh, ow) = (spec.out_height(), spec.out_width());
    let mut out = Vec::with_capacity(spec.output_len());
    for o in 0..spec.out_channels {
        for yo in 0..oh {
            for xo in 0..ow {
                let mut acc = T::zero();
                for c in 0..spec.in_channels {
                    for dy in 0..k1 {
                        for dx in 0..k2 {
                            let w = match mode {
                                TieMode::Cnn => kernel[((o * spec.in_channels + c) * k1 + dy) * k2 + dx],
                                TieMode::Lc => {
                                    let pos = (o * oh + yo) * ow + xo;
                                    kernel[((pos * spec.in_channels + c) * k1 + dy) * k2 + dx]
                                }
                            };
                            let v = input[(c * spec.height + yo * k1 + dy) * spec.width + xo * k2 + dx];
                            acc = acc + w * v;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Embeds conv (or LC) kernel weights into the equivalent dense matrix.
pub fn dense_from_conv<T: Real>(
    spec: &ConvSpec,
    kernel: &[T],
    mode: TieMode,
) -> Result<Matrix<T>, CorrespondenceError> {
    let map = toeplitz_layout(spec, mode)?;
    if kernel.len() != map.group_count() {
        return Err(CorrespondenceError::KernelLength {
            expected: map.group_count(),
            got: kernel.len(),
        });
    }
    Ok(map.scatter(kernel))
}
