use crate::vecmath::ParamVector;

/// Everything the workers saw in one completed DC-S3GD or SSGD iteration.
#[derive(Debug)]
pub struct RoundView<'a> {
    pub iteration: u64,
    /// Sum of all local updates of the previous iteration, `Δ̄w` (absent for
    /// the priming step and for SSGD).
    pub reduced_update: Option<&'a ParamVector>,
    /// `D_i` per worker, by worker index.
    pub distances: &'a [ParamVector],
    /// `w_i + D_i` per worker, by worker index.
    pub reconstructions: &'a [ParamVector],
    /// Local weights after the iteration's update, by worker index.
    pub weights: &'a [ParamVector],
}

/// One DC-ASGD parameter-server update.
#[derive(Debug)]
pub struct AsyncUpdateView<'a> {
    pub update_index: u64,
    pub worker: usize,
    /// Server updates applied since the worker fetched its weights.
    pub staleness: u64,
    /// `w_PS − w_worker` at the time the gradient arrived.
    pub distance: &'a ParamVector,
    pub server_weights: &'a ParamVector,
}

/// Hook for inspecting a run while it executes.
pub trait Observer {
    fn on_round(&mut self, _view: &RoundView<'_>) {}
    fn on_async_update(&mut self, _view: &AsyncUpdateView<'_>) {}
}

pub struct NoopObserver;

impl Observer for NoopObserver {}
