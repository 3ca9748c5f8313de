//! Kernel density estimates and violin-plot rendering to standalone SVG.
//!
//! Violins show a Gaussian KDE silhouette (Silverman bandwidth) reflected on
//! both sides of a range bar, plus a mean tick, one per group. Groups of
//! identical values fall back to the bar alone.

use crate::error::Error;
use crate::Result;

/// One labelled sample vector.
#[derive(Debug, Clone)]
pub struct ViolinGroup {
    pub label: String,
    pub values: Vec<f64>,
}

/// A labelled collection of groups with per-group bandwidths.
#[derive(Debug, Clone)]
pub struct ViolinDataset {
    pub groups: Vec<ViolinGroup>,
    pub bandwidths: Vec<f64>,
}

impl ViolinDataset {
    pub fn new(groups: Vec<ViolinGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptyInput("violin dataset".into()));
        }
        let mut bandwidths = Vec::with_capacity(groups.len());
        for g in &groups {
            if g.values.is_empty() {
                return Err(Error::EmptyInput(format!("violin group '{}'", g.label)));
            }
            bandwidths.push(silverman_bandwidth(&g.values));
        }
        Ok(Self { groups, bandwidths })
    }
}

/// Silverman's rule of thumb: `0.9 min(sd, iqr / 1.34) n^{-1/5}`.
///
/// Returns zero for degenerate samples (fewer than two distinct values).
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let quantile = |q: f64| {
        let pos = q * (n as f64 - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let t = pos - lo as f64;
        sorted[lo] * (1.0 - t) + sorted[hi] * t
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread <= 0.0 || !spread.is_finite() {
        return 0.0;
    }
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Gaussian KDE evaluated at the given points.
pub fn gaussian_kde(values: &[f64], bandwidth: f64, xs: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (std::f64::consts::TAU).sqrt());
    xs.iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &v in values {
                let z = (x - v) / bandwidth;
                acc += (-0.5 * z * z).exp();
            }
            acc * norm
        })
        .collect()
}

/// A KDE curve over an automatic range (five bandwidths beyond the extremes).
#[derive(Debug, Clone)]
pub struct KdeCurve {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Evaluate the KDE of a sample on `points` grid nodes; a degenerate sample
/// yields an empty curve with zero bandwidth.
pub fn kde_curve(values: &[f64], points: usize) -> Result<KdeCurve> {
    if values.is_empty() {
        return Err(Error::EmptyInput("kde input".into()));
    }
    let bandwidth = silverman_bandwidth(values);
    if bandwidth == 0.0 {
        return Ok(KdeCurve {
            xs: Vec::new(),
            density: Vec::new(),
            bandwidth,
        });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * bandwidth;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * bandwidth;
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points as f64 - 1.0))
        .collect();
    let density = gaussian_kde(values, bandwidth, &xs);
    Ok(KdeCurve {
        xs,
        density,
        bandwidth,
    })
}

const WIDTH_PER_GROUP: f64 = 150.0;
const HEIGHT: f64 = 460.0;
const MARGIN_LEFT: f64 = 86.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Render a violin plot as a standalone SVG document.
///
/// `metadata` is embedded as an XML comment so re-runs are traceable.
pub fn render_violin_svg(dataset: &ViolinDataset, title: &str, metadata: &str) -> Result<String> {
    let groups = &dataset.groups;
    let all_min = groups
        .iter()
        .flat_map(|g| g.values.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let all_max = groups
        .iter()
        .flat_map(|g| g.values.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = ((all_max - all_min) * 0.06).max(1e-12);
    let (y_lo, y_hi) = (all_min - pad, all_max + pad);

    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let width = MARGIN_LEFT + MARGIN_RIGHT + WIDTH_PER_GROUP * groups.len() as f64;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{HEIGHT:.0}\" \
         viewBox=\"0 0 {width:.0} {HEIGHT:.0}\">\n"
    ));
    svg.push_str(&format!("<!-- {} -->\n", metadata.replace("--", "- -")));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{}</text>\n",
        width / 2.0,
        escape_xml(title)
    ));

    // y axis with ticks
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT:.1}\" y1=\"{MARGIN_TOP:.1}\" x2=\"{MARGIN_LEFT:.1}\" \
         y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h
    ));
    for t in 0..=5 {
        let v = y_lo + (y_hi - y_lo) * t as f64 / 5.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_LEFT:.1}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            format_tick(v)
        ));
    }

    for (gi, group) in groups.iter().enumerate() {
        let cx = MARGIN_LEFT + WIDTH_PER_GROUP * (gi as f64 + 0.5);
        let gmin = group.values.iter().copied().fold(f64::INFINITY, f64::min);
        let gmax = group
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let gmean = group.values.iter().sum::<f64>() / group.values.len() as f64;

        let bandwidth = dataset.bandwidths[gi];
        if bandwidth > 0.0 {
            let curve = kde_curve(&group.values, 120)?;
            let dmax = curve.density.iter().copied().fold(0.0, f64::max).max(1e-300);
            let half = WIDTH_PER_GROUP * 0.42;
            let mut right = String::new();
            let mut left = String::new();
            for (x, d) in curve.xs.iter().zip(curve.density.iter()) {
                let y = y_of(x.clamp(y_lo, y_hi));
                let w = half * d / dmax;
                right.push_str(&format!("{:.2},{:.2} ", cx + w, y));
                left.push_str(&format!("{:.2},{:.2} ", cx - w, y));
            }
            let left_rev: String = left
                .split_whitespace()
                .rev()
                .collect::<Vec<_>>()
                .join(" ");
            svg.push_str(&format!(
                "<polygon points=\"{right}{left_rev}\" fill=\"#7aa6c2\" fill-opacity=\"0.55\" \
                 stroke=\"#2d5d7b\" stroke-width=\"1\"/>\n"
            ));
        }

        // range bar and mean tick
        svg.push_str(&format!(
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"#1a1a1a\" \
             stroke-width=\"1.5\"/>\n",
            y_of(gmin),
            y_of(gmax)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#b03030\" \
             stroke-width=\"2\"/>\n",
            cx - 12.0,
            y_of(gmean),
            cx + 12.0,
            y_of(gmean)
        ));
        svg.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 22.0,
            escape_xml(&group.label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{master_rng, standard_normal};
    use approx::assert_abs_diff_eq;

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = master_rng(81);
        let values: Vec<f64> = (0..400).map(|_| standard_normal(&mut rng)).collect();
        let curve = kde_curve(&values, 512).unwrap();
        let mut integral = 0.0;
        for w in curve.xs.windows(2).zip(curve.density.windows(2)) {
            let (xs, ds) = w;
            integral += 0.5 * (ds[0] + ds[1]) * (xs[1] - xs[0]);
        }
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn degenerate_group_renders_bar_only() {
        let dataset = ViolinDataset::new(vec![ViolinGroup {
            label: "flat".into(),
            values: vec![2.5; 40],
        }])
        .unwrap();
        assert_eq!(dataset.bandwidths[0], 0.0);
        let svg = render_violin_svg(&dataset, "degenerate", "meta").unwrap();
        assert!(!svg.contains("<polygon"), "no silhouette for flat data");
        assert!(svg.contains("<line"), "range bar still present");
    }

    #[test]
    fn two_groups_render_two_silhouettes() {
        let mut rng = master_rng(82);
        let a: Vec<f64> = (0..200).map(|_| standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..200).map(|_| 3.0 + 0.5 * standard_normal(&mut rng)).collect();
        let dataset = ViolinDataset::new(vec![
            ViolinGroup {
                label: "a".into(),
                values: a,
            },
            ViolinGroup {
                label: "b".into(),
                values: b,
            },
        ])
        .unwrap();
        let svg = render_violin_svg(&dataset, "pair", "meta").unwrap();
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));

        assert!(ViolinDataset::new(vec![ViolinGroup {
            label: "empty".into(),
            values: vec![],
        }])
        .is_err());
    }
}
