use serde::{Deserialize, Serialize};

/// Column headers, in table order.
pub const COLUMNS: [&str; 10] = [
    "Hand JPE",
    "MPJPE",
    "MPVPE",
    "T_root",
    "O_root",
    "Collision %",
    "FS",
    "C_prec",
    "C_rec",
    "F1 Score",
];

/// One row of the metric table. `fs` is absent for skeletons without feet.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub hand_jpe: f64,
    pub mpjpe: f64,
    pub mpvpe: f64,
    pub t_root: f64,
    pub o_root: f64,
    pub collision_pct: f64,
    pub fs: Option<f64>,
    pub c_prec: f64,
    pub c_rec: f64,
    pub f1: f64,
}

impl MetricRow {
    pub fn values(&self) -> [Option<f64>; 10] {
        [
            Some(self.hand_jpe),
            Some(self.mpjpe),
            Some(self.mpvpe),
            Some(self.t_root),
            Some(self.o_root),
            Some(self.collision_pct),
            self.fs,
            Some(self.c_prec),
            Some(self.c_rec),
            Some(self.f1),
        ]
    }

    /// Uniform mean over rows, summed in the given order.
    pub fn mean(rows: &[MetricRow]) -> MetricRow {
        let n = rows.len().max(1) as f64;
        let sum = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let fs = if rows.iter().all(|r| r.fs.is_some()) && !rows.is_empty() {
            Some(sum(&|r| r.fs.unwrap_or(0.0)))
        } else {
            None
        };
        MetricRow {
            hand_jpe: sum(&|r| r.hand_jpe),
            mpjpe: sum(&|r| r.mpjpe),
            mpvpe: sum(&|r| r.mpvpe),
            t_root: sum(&|r| r.t_root),
            o_root: sum(&|r| r.o_root),
            collision_pct: sum(&|r| r.collision_pct),
            fs,
            c_prec: sum(&|r| r.c_prec),
            c_rec: sum(&|r| r.c_rec),
            f1: sum(&|r| r.f1),
        }
    }

    pub fn markdown_cells(&self) -> String {
        self.values()
            .iter()
            .map(|v| v.map_or("n/a".to_string(), |x| format!("{x:.3}")))
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

pub fn markdown_header(first: &str) -> String {
    format!(
        "| {first} | {} |\n|{}",
        COLUMNS.join(" | "),
        "---|".repeat(COLUMNS.len() + 1)
    )
}
