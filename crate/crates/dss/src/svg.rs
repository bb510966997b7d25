//! Static SVG figures.

use std::fmt::Write as _;

use dss_core::cartpole::{CartPoleState, OptimalController};
use dss_core::DssModel;

use crate::error::Result;
use crate::experiment::{ExperimentReport, Group};

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

fn header(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let pad = 0.08 * (hi - lo).max(1e-9);
    (lo - pad, hi + pad)
}

/// ΔTE against ΔMSE per subject, both groups.
pub fn delta_scatter(r: &ExperimentReport) -> String {
    let (w, h, m) = (520.0, 420.0, 60.0);
    let xs: Vec<f64> = r.subjects.iter().map(|s| s.delta_mse()).collect();
    let ys: Vec<f64> = r.subjects.iter().map(|s| s.delta_te()).collect();
    let (x0, x1) = padded(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(x0),
        py(0.0),
        px(x1),
        py(0.0)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(y0),
        px(0.0),
        py(y1)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for sub in &r.subjects {
        let (x, y) = (px(sub.delta_mse()), py(sub.delta_te()));
        match sub.group {
            Group::Experimental => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"><title>{}</title></circle>"#,
                    PALETTE[0], sub.id
                );
            }
            Group::Control => {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="9" height="9" fill="{}"><title>{}</title></rect>"#,
                    x - 4.5,
                    y - 4.5,
                    PALETTE[1],
                    sub.id
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">ΔMSE (unassisted − assisted)</text>"#,
        w / 2.0,
        h - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">ΔTE (nats)</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30">{x0:.3} .. {x1:.3}, {y0:.3} .. {y1:.3}</text>"#,
        m
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{}" cy="24" r="5" fill="{}"/><text x="{}" y="28">experimental</text>"#,
        w - 190.0,
        PALETTE[0],
        w - 180.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="19.5" width="9" height="9" fill="{}"/><text x="{}" y="28">control</text>"#,
        w - 94.5,
        PALETTE[1],
        w - 80.0
    );
    s.push_str("</svg>\n");
    s
}

/// Behavior labels over the (θ, θ̇) plane with the cart at the goal, using the controller's
/// command as the control input.
pub fn partition_grid(model: &DssModel, controller: &OptimalController) -> Result<String> {
    let (nx, ny, cell, m) = (90usize, 60usize, 6.0, 50.0);
    let (rate_lo, rate_hi) = (-10.0, 10.0);
    let w = nx as f64 * cell + 2.0 * m;
    let h = ny as f64 * cell + 2.0 * m;
    let goal = controller.goal();
    let mut s = String::new();
    header(&mut s, w, h);
    for j in 0..ny {
        let rate = rate_hi - (j as f64 + 0.5) / ny as f64 * (rate_hi - rate_lo);
        for i in 0..nx {
            let theta =
                -std::f64::consts::PI + (i as f64 + 0.5) / nx as f64 * 2.0 * std::f64::consts::PI;
            let state = CartPoleState::new(theta, goal.x_c, rate, 0.0);
            let u = controller.control(&state);
            let p = model.basis.evaluate(&state.to_array(), u)?;
            let label = model.svm.classify(&p)?;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                m + i as f64 * cell,
                m + j as f64 * cell,
                PALETTE[label % PALETTE.len()]
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">θ from −π to π (rad)</text>"#,
        w / 2.0,
        h - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">θ̇ from {rate_lo} to {rate_hi} (rad/s)</text>"#,
        h / 2.0,
        h / 2.0
    );
    for k in 0..model.num_behaviors() {
        let x = m + 110.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="18" width="12" height="12" fill="{}"/><text x="{}" y="29">behavior {k}</text>"#,
            PALETTE[k % PALETTE.len()],
            x + 16.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
