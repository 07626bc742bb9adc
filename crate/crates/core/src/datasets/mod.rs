//! 2D toy factor datasets: one filled object on a black canvas whose x/y
//! position, brightness ("colour") and shape are the generative factors.

mod io;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const MAX_ROWS: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Xy,
    Xyc,
    Xys,
    Xycs,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Xy, Variant::Xyc, Variant::Xys, Variant::Xycs];

    pub fn has_color(self) -> bool {
        matches!(self, Variant::Xyc | Variant::Xycs)
    }

    pub fn has_shape(self) -> bool {
        matches!(self, Variant::Xys | Variant::Xycs)
    }

    /// Recovers the variant from a list of factor names.
    pub fn from_factor_names<S: AsRef<str>>(names: &[S]) -> Option<Self> {
        let names: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
        match names.as_slice() {
            ["x", "y"] => Some(Variant::Xy),
            ["x", "y", "color"] => Some(Variant::Xyc),
            ["x", "y", "shape"] => Some(Variant::Xys),
            ["x", "y", "color", "shape"] => Some(Variant::Xycs),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Xy => "XY",
            Variant::Xyc => "XYC",
            Variant::Xys => "XYS",
            Variant::Xycs => "XYCS",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "XY" => Ok(Variant::Xy),
            "XYC" => Ok(Variant::Xyc),
            "XYS" => Ok(Variant::Xys),
            "XYCS" => Ok(Variant::Xycs),
            _ => Err(Error::Argument(format!(
                "unknown variant {s:?} (expected XY, XYC, XYS or XYCS)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectShape {
    Circle,
    Square,
    Diamond,
}

impl ObjectShape {
    pub fn from_index(i: usize) -> Option<Self> {
        [ObjectShape::Circle, ObjectShape::Square, ObjectShape::Diamond]
            .get(i)
            .copied()
    }

    fn contains(self, dx: i64, dy: i64, r: i64) -> bool {
        match self {
            ObjectShape::Circle => dx * dx + dy * dy <= r * r,
            ObjectShape::Square => dx.abs() <= r && dy.abs() <= r,
            ObjectShape::Diamond => dx.abs() + dy.abs() <= r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorSpec {
    pub name: String,
    pub cardinality: usize,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Result<Self> {
        if cardinality == 0 {
            return Err(Error::Argument("factor cardinality must be ≥ 1".into()));
        }
        Ok(Self {
            name: name.into(),
            cardinality,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyConfig {
    pub variant: Variant,
    /// Positions per axis.
    pub grid: usize,
    pub image_side: usize,
    pub n_colors: usize,
    pub n_shapes: usize,
    pub object_radius: usize,
    pub color_levels: Vec<f64>,
}

impl ToyConfig {
    /// Desk-scale defaults: 16 positions per axis on a 32×32 canvas.
    pub fn desk(variant: Variant) -> Self {
        Self::with_grid(variant, 16, 32)
    }

    /// The full-size setup: 53 positions per axis on an 84×84 canvas.
    pub fn full(variant: Variant) -> Self {
        Self::with_grid(variant, 53, 84)
    }

    pub fn with_grid(variant: Variant, grid: usize, image_side: usize) -> Self {
        Self {
            variant,
            grid,
            image_side,
            n_colors: 5,
            n_shapes: 3,
            object_radius: image_side / 8,
            color_levels: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }

    pub fn margin(&self) -> usize {
        self.object_radius + 1
    }

    fn stride(&self) -> f64 {
        if self.grid <= 1 {
            return 0.0;
        }
        let span = self.image_side as f64 - 1.0 - 2.0 * self.margin() as f64;
        span / (self.grid - 1) as f64
    }

    /// Pixel coordinate of grid index `idx` along either axis.
    pub fn center(&self, idx: usize) -> usize {
        if self.grid <= 1 {
            return self.image_side / 2;
        }
        (self.margin() as f64 + idx as f64 * self.stride()).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.grid == 0 {
            return arg("grid must be ≥ 1".into());
        }
        if self.n_shapes == 0 || self.n_shapes > 3 {
            return arg(format!("n_shapes must be 1..=3, got {}", self.n_shapes));
        }
        if self.n_colors == 0 || self.color_levels.len() != self.n_colors {
            return arg(format!(
                "{} colour levels for n_colors={}",
                self.color_levels.len(),
                self.n_colors
            ));
        }
        if self.color_levels.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return arg("colour levels must lie in (0, 1]".into());
        }
        if self.image_side < 2 * self.margin() + 1 {
            return arg(format!(
                "object of radius {} does not fit a {}-pixel canvas",
                self.object_radius, self.image_side
            ));
        }
        if self.grid > 1 && self.stride() < 1.0 {
            return arg(format!(
                "{} positions do not fit between the margins of a {}-pixel canvas",
                self.grid, self.image_side
            ));
        }
        Ok(())
    }

    /// Factors that vary in this variant, in column order.
    pub fn factor_specs(&self) -> Vec<FactorSpec> {
        let mut specs = vec![
            FactorSpec {
                name: "x".into(),
                cardinality: self.grid,
            },
            FactorSpec {
                name: "y".into(),
                cardinality: self.grid,
            },
        ];
        if self.variant.has_color() {
            specs.push(FactorSpec {
                name: "color".into(),
                cardinality: self.n_colors,
            });
        }
        if self.variant.has_shape() {
            specs.push(FactorSpec {
                name: "shape".into(),
                cardinality: self.n_shapes,
            });
        }
        specs
    }
}

/// Rasterises one object; row-major `image_side²` pixels in `[0, 1]`.
pub fn render_toy_image(
    config: &ToyConfig,
    x_idx: usize,
    y_idx: usize,
    color_idx: usize,
    shape_idx: usize,
) -> Result<Vec<f32>> {
    config.validate()?;
    let check = |name: &str, idx: usize, card: usize| {
        if idx >= card {
            Err(Error::Argument(format!("{name} index {idx} ≥ {card}")))
        } else {
            Ok(())
        }
    };
    check("x", x_idx, config.grid)?;
    check("y", y_idx, config.grid)?;
    check("color", color_idx, config.n_colors)?;
    check("shape", shape_idx, config.n_shapes)?;

    let side = config.image_side;
    let shape = ObjectShape::from_index(shape_idx).expect("validated above");
    let level = config.color_levels[color_idx] as f32;
    let (cx, cy) = (config.center(x_idx) as i64, config.center(y_idx) as i64);
    let r = config.object_radius as i64;
    let mut img = vec![0.0f32; side * side];
    for py in (cy - r).max(0)..=(cy + r).min(side as i64 - 1) {
        for px in (cx - r).max(0)..=(cx + r).min(side as i64 - 1) {
            if shape.contains(px - cx, py - cy, r) {
                img[py as usize * side + px as usize] = level;
            }
        }
    }
    Ok(img)
}

/// Images with their integer ground-truth factors, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorDataset {
    pub image_side: usize,
    pub images: Vec<f32>,
    pub factors: Vec<u16>,
    pub specs: Vec<FactorSpec>,
}

impl FactorDataset {
    pub fn new(
        image_side: usize,
        images: Vec<f32>,
        factors: Vec<u16>,
        specs: Vec<FactorSpec>,
    ) -> Result<Self> {
        let dim = image_side * image_side;
        let f = specs.len();
        let n = if dim == 0 { 0 } else { images.len() / dim };
        if images.len() != n * dim || factors.len() != n * f {
            return Err(Error::dim(
                "dataset",
                &[n, dim, f],
                &[images.len(), factors.len()],
            ));
        }
        for (i, row) in factors.chunks_exact(f.max(1)).enumerate().take(n) {
            for (v, s) in row.iter().zip(&specs) {
                if *v as usize >= s.cardinality {
                    return Err(Error::Argument(format!(
                        "row {i}: {} label {v} ≥ cardinality {}",
                        s.name, s.cardinality
                    )));
                }
            }
        }
        Ok(Self {
            image_side,
            images,
            factors,
            specs,
        })
    }

    pub fn len(&self) -> usize {
        self.factors.len() / self.specs.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_dim(&self) -> usize {
        self.image_side * self.image_side
    }

    pub fn n_factors(&self) -> usize {
        self.specs.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.specs.iter().map(|s| s.cardinality).collect()
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn variant(&self) -> Option<Variant> {
        Variant::from_factor_names(&self.factor_names())
    }

    pub fn image(&self, row: usize) -> &[f32] {
        let d = self.image_dim();
        &self.images[row * d..(row + 1) * d]
    }

    pub fn factor_row(&self, row: usize) -> &[u16] {
        let f = self.n_factors();
        &self.factors[row * f..(row + 1) * f]
    }

    /// Stacks the given rows into an `m × image_dim` tensor.
    pub fn batch(&self, rows: &[usize]) -> Tensor {
        let d = self.image_dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend(self.image(r).iter().map(|&v| v as f64));
        }
        Tensor::matrix(rows.len(), d, data).expect("batch shape is consistent")
    }

    /// Images `start..end` as a tensor.
    pub fn slice(&self, start: usize, end: usize) -> Tensor {
        let rows: Vec<usize> = (start..end).collect();
        self.batch(&rows)
    }
}

/// Exhaustive Cartesian product of the active factors in odometer order (the
/// first factor varies slowest). Inactive factors use the brightest level and
/// the circle.
pub fn generate_toy_dataset(config: &ToyConfig) -> Result<FactorDataset> {
    config.validate()?;
    let specs = config.factor_specs();
    let n = specs
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.cardinality))
        .filter(|&n| n <= MAX_ROWS)
        .ok_or_else(|| {
            Error::Size(specs.iter().map(|s| s.cardinality).fold(1, usize::saturating_mul))
        })?;
    if specs.iter().any(|s| s.cardinality > u16::MAX as usize + 1) {
        return Err(Error::Argument("factor cardinality exceeds u16 labels".into()));
    }

    let dim = config.image_side * config.image_side;
    let mut images = Vec::with_capacity(n * dim);
    let mut factors = Vec::with_capacity(n * specs.len());
    let mut idx = vec![0usize; specs.len()];
    for _ in 0..n {
        let color = if config.variant.has_color() { idx[2] } else { config.n_colors - 1 };
        let shape = match config.variant {
            Variant::Xys => idx[2],
            Variant::Xycs => idx[3],
            _ => 0,
        };
        images.extend(render_toy_image(config, idx[0], idx[1], color, shape)?);
        factors.extend(idx.iter().map(|&v| v as u16));
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < specs[k].cardinality {
                break;
            }
            idx[k] = 0;
        }
    }
    FactorDataset::new(config.image_side, images, factors, specs)
}

#[derive(Clone, Debug)]
pub struct FixedFactorBatch {
    pub rows: Vec<usize>,
    pub images: Tensor,
    pub value: u16,
}

/// Draws `batch_size` distinct samples that share one uniformly drawn value of
/// factor `k`; the remaining factors are uniform over the matching rows.
pub fn fixed_factor_batch(
    dataset: &FactorDataset,
    k: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<FixedFactorBatch> {
    if k >= dataset.n_factors() {
        return Err(Error::Argument(format!(
            "factor {k} out of range for {} factors",
            dataset.n_factors()
        )));
    }
    if batch_size < 2 {
        return Err(Error::Argument(format!("batch size must be ≥ 2, got {batch_size}")));
    }
    let value = rng.below(dataset.specs[k].cardinality) as u16;
    let matching: Vec<usize> = (0..dataset.len())
        .filter(|&r| dataset.factor_row(r)[k] == value)
        .collect();
    if batch_size > matching.len() {
        return Err(Error::Argument(format!(
            "batch of {batch_size} exceeds the {} samples with {} = {value}",
            matching.len(),
            dataset.specs[k].name
        )));
    }
    let rows: Vec<usize> = rng
        .sample_distinct(matching.len(), batch_size)
        .into_iter()
        .map(|i| matching[i])
        .collect();
    let images = dataset.batch(&rows);
    Ok(FixedFactorBatch {
        rows,
        images,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn xy_desk_has_256_rows() {
        let ds = generate_toy_dataset(&ToyConfig::desk(Variant::Xy)).unwrap();
        assert_eq!(ds.len(), 256);
        assert_eq!(ds.n_factors(), 2);
        assert_eq!(ds.image_dim(), 1024);
    }

    #[test]
    fn full_xycs_row_count() {
        let cfg = ToyConfig::full(Variant::Xycs);
        let n: usize = cfg.factor_specs().iter().map(|s| s.cardinality).product();
        assert_eq!(n, 53 * 53 * 5 * 3);
        assert_eq!(n, 42_135);
        cfg.validate().unwrap();
    }

    #[test]
    fn factor_columns_are_uniform_and_exhaustive() {
        let mut cfg = ToyConfig::desk(Variant::Xycs);
        cfg.grid = 6;
        let ds = generate_toy_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 6 * 6 * 5 * 3);
        for (k, spec) in ds.specs.iter().enumerate() {
            let mut counts = vec![0usize; spec.cardinality];
            for r in 0..ds.len() {
                counts[ds.factor_row(r)[k] as usize] += 1;
            }
            assert!(counts.iter().all(|&c| c == ds.len() / spec.cardinality));
        }
        let tuples: HashSet<&[u16]> = (0..ds.len()).map(|r| ds.factor_row(r)).collect();
        assert_eq!(tuples.len(), ds.len());
    }

    #[test]
    fn rendering_is_injective_at_desk_scale() {
        let ds = generate_toy_dataset(&ToyConfig::desk(Variant::Xycs)).unwrap();
        let images: HashSet<Vec<u32>> = (0..ds.len())
            .map(|r| ds.image(r).iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(images.len(), ds.len());
    }

    #[test]
    fn color_change_scales_same_support() {
        let cfg = ToyConfig::desk(Variant::Xycs);
        let a = render_toy_image(&cfg, 3, 7, 0, 2).unwrap();
        let b = render_toy_image(&cfg, 3, 7, 4, 2).unwrap();
        let support = |img: &[f32]| -> Vec<usize> {
            img.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect()
        };
        assert_eq!(support(&a), support(&b));
        for i in support(&a) {
            assert!((b[i] / a[i] - 5.0).abs() < 1e-5);
        }
    }

    #[test]
    fn pixels_in_unit_range_and_object_inside() {
        let cfg = ToyConfig::desk(Variant::Xycs);
        for s in 0..3 {
            for &x in &[0, 15] {
                let img = render_toy_image(&cfg, x, 15 - x, 4, s).unwrap();
                assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
                let side = cfg.image_side;
                // border stays black, so nothing was clipped
                for i in 0..side {
                    for &p in &[i, (side - 1) * side + i, i * side, i * side + side - 1] {
                        assert_eq!(img[p], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn distinct_positions_differ() {
        let cfg = ToyConfig::desk(Variant::Xy);
        let a = render_toy_image(&cfg, 0, 0, 4, 0).unwrap();
        let b = render_toy_image(&cfg, 1, 0, 4, 0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn render_rejects_out_of_range() {
        let cfg = ToyConfig::desk(Variant::Xy);
        assert!(matches!(
            render_toy_image(&cfg, 16, 0, 0, 0),
            Err(Error::Argument(_))
        ));
        assert!(render_toy_image(&cfg, 0, 0, 5, 0).is_err());
        assert!(render_toy_image(&cfg, 0, 0, 0, 3).is_err());
    }

    #[test]
    fn oversized_config_is_rejected() {
        let mut cfg = ToyConfig::with_grid(Variant::Xycs, 2000, 4100);
        cfg.object_radius = 1;
        assert!(matches!(generate_toy_dataset(&cfg), Err(Error::Size(_))));
    }

    #[test]
    fn fixed_factor_batch_shares_value() {
        let ds = generate_toy_dataset(&ToyConfig::desk(Variant::Xy)).unwrap();
        let mut rng = Rng::new(5);
        for k in 0..2 {
            let b = fixed_factor_batch(&ds, k, 10, &mut rng).unwrap();
            assert_eq!(b.images.shape(), &[10, 1024]);
            assert!(b.rows.iter().all(|&r| ds.factor_row(r)[k] == b.value));
        }
        assert!(fixed_factor_batch(&ds, 0, 17, &mut rng).is_err());
        assert!(fixed_factor_batch(&ds, 0, 1, &mut rng).is_err());

        let x = fixed_factor_batch(&ds, 1, 8, &mut Rng::new(9)).unwrap();
        let y = fixed_factor_batch(&ds, 1, 8, &mut Rng::new(9)).unwrap();
        assert_eq!(x.rows, y.rows);
    }

    #[test]
    fn fixed_value_is_uniform() {
        // χ² goodness of fit over 16 values, 3200 draws; p > 0.01 ⇔ χ² < 30.58 (df 15)
        let ds = generate_toy_dataset(&ToyConfig::desk(Variant::Xy)).unwrap();
        let mut rng = Rng::new(1234);
        let mut counts = [0f64; 16];
        let draws = 3200;
        for _ in 0..draws {
            counts[fixed_factor_batch(&ds, 0, 2, &mut rng).unwrap().value as usize] += 1.0;
        }
        let expected = draws as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        assert!(chi2 < 30.58, "chi2 = {chi2}");
    }
}
