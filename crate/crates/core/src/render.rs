//! Static SVG pictures of plans and first-stage searches.

use std::fmt::Write as _;

use thiserror::Error;

use crate::comms::within_range;
use crate::graph::VertexId;
use crate::io::{Cell, LoadedScenario, Stage1Dump};
use crate::plan::{goal_visit_times, ActionKind, Plan};

/// Agent colors, cycled by index.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("image of {width}x{height} px exceeds the budget of {budget} px")]
    TooLarge { width: u64, height: u64, budget: u64 },
    #[error("epoch {epoch} out of range ({count} epochs)")]
    NoSuchEpoch { epoch: usize, count: usize },
    #[error("plan has {plan} agents, scenario has {scenario}")]
    AgentMismatch { plan: usize, scenario: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub cell_px: u32,
    /// Uniform snapshots added to the goal-visit times for link drawing.
    pub snapshots: usize,
    pub max_pixels: u64,
    /// Epoch shown for first-stage dumps.
    pub epoch: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            cell_px: 16,
            snapshots: 8,
            max_pixels: 16_000_000,
            epoch: 0,
        }
    }
}

struct Canvas {
    out: String,
    px: f64,
}

impl Canvas {
    fn center(&self, cell: Cell) -> (f64, f64) {
        ((cell[0] as f64 + 0.5) * self.px, (cell[1] as f64 + 0.5) * self.px)
    }

    fn cell_rect(&mut self, cell: Cell, class: &str, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.out,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{fill}" fill-opacity="{opacity}"/>"#,
            cell[0] as f64 * self.px,
            cell[1] as f64 * self.px,
            self.px,
            self.px
        );
    }
}

fn begin(loaded: &LoadedScenario, opts: &RenderOptions) -> Result<Canvas, RenderError> {
    let px = u64::from(opts.cell_px.max(1));
    let (w, h) = (loaded.grid.width() as u64 * px, loaded.grid.height() as u64 * px + 2 * px);
    if w.saturating_mul(h) > opts.max_pixels {
        return Err(RenderError::TooLarge {
            width: w,
            height: h,
            budget: opts.max_pixels,
        });
    }
    let mut c = Canvas {
        out: String::new(),
        px: px as f64,
    };
    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(c.out, r##"<rect class="background" width="{w}" height="{h}" fill="#ffffff"/>"##);
    for row in 0..loaded.grid.height() {
        for col in 0..loaded.grid.width() {
            if !loaded.grid.is_passable(col, row) {
                c.cell_rect([col, row], "obstacle", "#303030", 1.0);
            }
        }
    }
    Ok(c)
}

fn goals(c: &mut Canvas, loaded: &LoadedScenario) {
    for (k, &g) in loaded.scenario.goals.iter().enumerate() {
        let (x, y) = c.center(loaded.cell(g));
        let _ = writeln!(
            c.out,
            r##"<circle class="goal" cx="{x}" cy="{y}" r="{}" fill="none" stroke="#ff8c00" stroke-width="2"><title>goal {k}</title></circle>"##,
            c.px * 0.4
        );
    }
}

fn scale_bar(c: &mut Canvas, loaded: &LoadedScenario) {
    let lambda = loaded.scenario.comm.limit;
    let y = (loaded.grid.height() as f64 + 1.0) * c.px;
    let x0 = 0.5 * c.px;
    if lambda.is_finite() {
        let x1 = x0 + lambda * c.px;
        let _ = writeln!(
            c.out,
            r##"<line class="scale-bar" x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#000000" stroke-width="3"/>"##
        );
        let _ = writeln!(
            c.out,
            r#"<text x="{}" y="{}" font-size="{}">λ = {lambda}</text>"#,
            x1 + 0.3 * c.px,
            y + 0.3 * c.px,
            0.8 * c.px
        );
    } else {
        let _ = writeln!(c.out, r#"<text x="{x0}" y="{y}" font-size="{}">λ = ∞</text>"#, 0.8 * c.px);
    }
}

fn finish(mut c: Canvas) -> String {
    c.out.push_str("</svg>\n");
    c.out
}

/// Times at which links are drawn: each goal visit plus a uniform split of the plan.
pub fn snapshot_times(visits: &[f64], end: f64, count: usize) -> Vec<f64> {
    let mut times: Vec<f64> = visits.to_vec();
    if count > 0 {
        for k in 0..count {
            times.push(end * k as f64 / (count.max(2) - 1) as f64);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    times
}

/// Obstacles, goals, one trace per agent, communication links at snapshot
/// times and a scale bar for the communication limit.
pub fn render_plan(loaded: &LoadedScenario, plan: &Plan, opts: &RenderOptions) -> Result<String, RenderError> {
    let s = &loaded.scenario;
    if plan.agent_count() != s.agent_count() {
        return Err(RenderError::AgentMismatch {
            plan: plan.agent_count(),
            scenario: s.agent_count(),
        });
    }
    let mut c = begin(loaded, opts)?;
    let visits = goal_visit_times(s, plan).unwrap_or_default();
    let times = snapshot_times(&visits, plan.end_time(), opts.snapshots);
    for &t in &times {
        let at: Vec<VertexId> = (0..s.agent_count()).map(|a| plan.position_at(a, s.starts[a], t)).collect();
        for i in 0..at.len() {
            for j in i + 1..at.len() {
                let (pi, pj) = (s.graph.coord(at[i]), s.graph.coord(at[j]));
                if within_range(&s.comm, pi, pj) {
                    let (x1, y1) = c.center(loaded.cell(at[i]));
                    let (x2, y2) = c.center(loaded.cell(at[j]));
                    let _ = writeln!(
                        c.out,
                        r##"<line class="link" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="#a0a0a0" stroke-width="1" stroke-opacity="0.7"><title>t = {t}</title></line>"##
                    );
                }
            }
        }
    }
    for (a, acts) in plan.agents.iter().enumerate() {
        let color = PALETTE[a % PALETTE.len()];
        let mut pts = vec![c.center(loaded.cell(s.starts[a]))];
        pts.extend(acts.iter().filter(|x| x.kind == ActionKind::Move).map(|x| c.center(loaded.cell(x.to))));
        let points: Vec<String> = pts.iter().map(|(x, y)| format!("{x},{y}")).collect();
        let _ = writeln!(
            c.out,
            r#"<polyline class="trace" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let (x, y) = pts[0];
        let _ = writeln!(
            c.out,
            r#"<rect class="start" x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
            x - 0.25 * c.px,
            y - 0.25 * c.px,
            0.5 * c.px,
            0.5 * c.px
        );
    }
    goals(&mut c, loaded);
    scale_bar(&mut c, loaded);
    Ok(finish(c))
}

/// One epoch of a first-stage dump: opened cells lightly tinted per agent,
/// result cells in orange, initial cells outlined.
pub fn render_stage1(loaded: &LoadedScenario, dump: &Stage1Dump, opts: &RenderOptions) -> Result<String, RenderError> {
    let epoch = dump.epochs.get(opts.epoch).ok_or(RenderError::NoSuchEpoch {
        epoch: opts.epoch,
        count: dump.epochs.len(),
    })?;
    let mut c = begin(loaded, opts)?;
    for a in &epoch.agents {
        let color = PALETTE[a.agent % PALETTE.len()];
        let tag = format!("agent-{}", a.agent);
        for &cell in &a.opened {
            c.cell_rect(cell, &format!("opened {tag}"), color, 0.12);
        }
        for &cell in &a.result {
            c.cell_rect(cell, &format!("result {tag}"), "#ff8c00", 0.35);
        }
        for &cell in &a.init {
            let _ = writeln!(
                c.out,
                r#"<rect class="init {tag}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                cell[0] as f64 * c.px,
                cell[1] as f64 * c.px,
                c.px,
                c.px
            );
        }
    }
    goals(&mut c, loaded);
    scale_bar(&mut c, loaded);
    Ok(finish(c))
}
