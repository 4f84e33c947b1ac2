use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Relaxed,
    Binary,
}

/// One of the three variable blocks updated by the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    X,
    Y,
    W,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::X, Block::Y, Block::W];

    pub fn name(self) -> &'static str {
        match self {
            Block::X => "x",
            Block::Y => "y",
            Block::W => "w",
        }
    }
}

/// Where an offloaded task runs: a station of the space or the data centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Route {
    Station(usize),
    Dc,
}

/// Offloading, routing and caching decisions for every task of a space.
///
/// `y` and `w` are `tasks x (stations + 1)` row-major matrices. Column `n`
/// of `y` means "execute at station `n`": the task's home column is the
/// local-execution variable and the other station columns are forwarding
/// variables. The last column is the data centre. `w` uses the same columns
/// for cache placement, the last column meaning "not cached in the space".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub mode: Mode,
    pub stations: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl DecisionVector {
    pub fn zeros(tasks: usize, stations: usize, mode: Mode) -> DecisionVector {
        let r = stations + 1;
        DecisionVector { mode, stations, x: vec![0.0; tasks], y: vec![0.0; tasks * r], w: vec![0.0; tasks * r] }
    }

    pub fn tasks(&self) -> usize {
        self.x.len()
    }

    pub fn routes(&self) -> usize {
        self.stations + 1
    }

    pub fn dc(&self) -> usize {
        self.stations
    }

    pub fn route(&self, r: usize) -> Route {
        if r == self.stations {
            Route::Dc
        } else {
            Route::Station(r)
        }
    }

    pub fn y_row(&self, k: usize) -> &[f64] {
        let r = self.routes();
        &self.y[k * r..(k + 1) * r]
    }

    pub fn y_row_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.routes();
        &mut self.y[k * r..(k + 1) * r]
    }

    pub fn w_row(&self, k: usize) -> &[f64] {
        let r = self.routes();
        &self.w[k * r..(k + 1) * r]
    }

    pub fn w_row_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.routes();
        &mut self.w[k * r..(k + 1) * r]
    }

    pub fn y(&self, k: usize, r: usize) -> f64 {
        self.y[k * self.routes() + r]
    }

    pub fn w(&self, k: usize, r: usize) -> f64 {
        self.w[k * self.routes() + r]
    }

    pub fn y_local(&self, k: usize, home: usize) -> f64 {
        self.y(k, home)
    }

    pub fn y_fwd(&self, k: usize, n: usize) -> f64 {
        self.y(k, n)
    }

    pub fn y_dc(&self, k: usize) -> f64 {
        self.y(k, self.dc())
    }

    pub fn w_dc(&self, k: usize) -> f64 {
        self.w(k, self.dc())
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::X => &self.x,
            Block::Y => &self.y,
            Block::W => &self.w,
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut Vec<f64> {
        match b {
            Block::X => &mut self.x,
            Block::Y => &mut self.y,
            Block::W => &mut self.w,
        }
    }

    /// Sets task `k` to run locally: no routing, content not cached.
    pub fn set_local(&mut self, k: usize) {
        let dc = self.dc();
        self.x[k] = 0.0;
        self.y_row_mut(k).fill(0.0);
        let w = self.w_row_mut(k);
        w.fill(0.0);
        w[dc] = 1.0;
    }

    /// Sets task `k` to offload along route `r` with its content at `cache`.
    pub fn set_offload(&mut self, k: usize, r: usize, cache: usize) {
        self.x[k] = 1.0;
        let y = self.y_row_mut(k);
        y.fill(0.0);
        y[r] = 1.0;
        let w = self.w_row_mut(k);
        w.fill(0.0);
        w[cache] = 1.0;
    }

    /// Index of the chosen route of an offloaded binary task.
    pub fn chosen_route(&self, k: usize) -> Option<usize> {
        if self.x[k] < 0.5 {
            return None;
        }
        self.y_row(k).iter().position(|&v| v > 0.5)
    }

    pub fn chosen_cache(&self, k: usize) -> Option<usize> {
        self.w_row(k).iter().position(|&v| v > 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.routes();
        if self.y.len() != self.x.len() * r || self.w.len() != self.x.len() * r {
            return Err(Error::Parameter("decision vector dimensions disagree".into()));
        }
        for v in self.x.iter().chain(&self.y).chain(&self.w) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Parameter(format!("decision entry {v} outside [0, 1]")));
            }
            if self.mode == Mode::Binary && *v != 0.0 && *v != 1.0 {
                return Err(Error::Parameter(format!("binary decision has entry {v}")));
            }
        }
        Ok(())
    }
}

/// Per-task resource shares: spectrum fraction at the home station, compute
/// rate at each execution site (same columns as `y`), and bits of the task's
/// content held at each station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationView {
    pub stations: usize,
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
}

impl AllocationView {
    pub fn zeros(tasks: usize, stations: usize) -> AllocationView {
        AllocationView {
            stations,
            a: vec![0.0; tasks],
            p: vec![0.0; tasks * (stations + 1)],
            c: vec![0.0; tasks * stations],
        }
    }

    pub fn p(&self, k: usize, r: usize) -> f64 {
        self.p[k * (self.stations + 1) + r]
    }

    pub fn set_p(&mut self, k: usize, r: usize, v: f64) {
        self.p[k * (self.stations + 1) + r] = v;
    }

    pub fn c(&self, k: usize, m: usize) -> f64 {
        self.c[k * self.stations + m]
    }

    pub fn set_c(&mut self, k: usize, m: usize, v: f64) {
        self.c[k * self.stations + m] = v;
    }
}
