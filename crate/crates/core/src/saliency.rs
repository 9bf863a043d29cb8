//! Motion saliency: score proposals by their mean normalized flow magnitude
//! and drop the ones that barely move.

use crate::corpus::RegionProposal;
use crate::error::{Error, Result};
use crate::geometry::Bbox;

pub const DEFAULT_ALPHA: f64 = 0.3;

/// Dense per-frame grid of optical-flow magnitudes, row-major, top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMagnitudeMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl FlowMagnitudeMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "flow map must have positive size, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "flow map {width}x{height} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("flow map has non-finite value {v}")));
        }
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::invalid(format!("flow map has negative value {v}")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaliencyReport {
    pub total_count: usize,
    pub retained_count: usize,
    pub discard_fraction: f64,
    pub alpha: f64,
}

impl SaliencyReport {
    pub fn new(total_count: usize, retained_count: usize, alpha: f64) -> Self {
        let discard_fraction = if total_count == 0 {
            0.0
        } else {
            1.0 - retained_count as f64 / total_count as f64
        };
        Self {
            total_count,
            retained_count,
            discard_fraction,
            alpha,
        }
    }

    /// Sum of several per-frame reports under the same alpha.
    pub fn merge(reports: &[SaliencyReport], alpha: f64) -> Self {
        let total = reports.iter().map(|r| r.total_count).sum();
        let retained = reports.iter().map(|r| r.retained_count).sum();
        Self::new(total, retained, alpha)
    }
}

/// Divide every magnitude by the map maximum. An all-zero map stays all zero.
pub fn normalize(map: &FlowMagnitudeMap) -> FlowMagnitudeMap {
    let max = map.max_value();
    let values = if max > 0.0 {
        map.values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; map.values.len()]
    };
    FlowMagnitudeMap {
        width: map.width,
        height: map.height,
        values,
    }
}

/// Half-open pixel index range whose centers `i + 0.5` fall in `[lo, hi)`,
/// clipped to `[0, limit)`.
fn covered_pixels(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    let start = (lo - 0.5).ceil().max(0.0);
    let end = (hi - 0.5).ceil().min(limit as f64);
    if end <= start {
        (0, 0)
    } else {
        (start as u32, end as u32)
    }
}

/// Mean normalized magnitude over the pixels whose centers lie inside `region`.
///
/// `map` is expected to be normalized already.
pub fn region_motion_score(map: &FlowMagnitudeMap, region: &Bbox) -> Result<f64> {
    let (x0, x1) = covered_pixels(region.x1(), region.x2(), map.width);
    let (y0, y1) = covered_pixels(region.y1(), region.y2(), map.height);
    let count = (x1 - x0) as u64 * (y1 - y0) as u64;
    if count == 0 {
        return Err(Error::invalid(format!(
            "region {:?} covers no pixel centers of the {}x{} flow map",
            region.to_array(),
            map.width,
            map.height
        )));
    }
    let w = map.width as usize;
    let mut sum = 0.0f64;
    for y in y0..y1 {
        let row = &map.values[y as usize * w..(y as usize + 1) * w];
        sum += row[x0 as usize..x1 as usize]
            .iter()
            .map(|&v| v as f64)
            .sum::<f64>();
    }
    Ok(sum / count as f64)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Motion score of every proposal against the raw (unnormalized) `map`.
///
/// Proposals that cover no pixel center of the map carry no motion evidence
/// and score 0.
pub fn score_regions(proposals: &[RegionProposal], map: &FlowMagnitudeMap) -> Vec<f64> {
    let normalized = normalize(map);
    proposals
        .iter()
        .map(|p| region_motion_score(&normalized, &p.bbox).unwrap_or(0.0))
        .collect()
}

/// Keep the proposals with motion score `>= alpha`, in input order.
pub fn filter_regions(
    proposals: &[RegionProposal],
    map: &FlowMagnitudeMap,
    alpha: f64,
) -> Result<(Vec<RegionProposal>, SaliencyReport)> {
    check_alpha(alpha)?;
    let scores = score_regions(proposals, map);
    let retained: Vec<RegionProposal> = proposals
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s >= alpha)
        .map(|(p, _)| p.clone())
        .collect();
    let report = SaliencyReport::new(proposals.len(), retained.len(), alpha);
    Ok((retained, report))
}
