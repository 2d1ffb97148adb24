use thiserror::Error;

use crate::bounding_flows::PlaneTrajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("capacity exceeded: {what} needs {bytes} bytes, budget is {budget} bytes")]
    Capacity { what: String, bytes: u128, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported order p={p} for {op}")]
    UnsupportedOrder { p: usize, op: &'static str },

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("descent did not converge after {iters} iterations (u={u}, v={v})")]
    NotConverged { iters: usize, u: f64, v: f64 },

    #[error("descent converged outside the target region: u={u} <= eta={eta} (v={v})")]
    TargetRegionMiss { u: f64, v: f64, eta: f64 },

    #[error("window of {window} samples exceeds record length {len}")]
    WindowTooLong { window: usize, len: usize },

    #[error("no ground-state density E0 for index {index} (needed by p={p}); supply it in the E0 table")]
    MissingE0 { p: u32, index: u32 },

    #[error("{curve}({u}) is outside its domain")]
    Domain { curve: &'static str, u: f64 },

    #[error("flow blew up at t={time}")]
    FlowBlowUp { time: f64, partial: Box<PlaneTrajectory> },

    #[error("not a graph: {0}")]
    NotAGraph(String),

    #[error("geometry window: {0}")]
    GeometryWindow(String),

    #[error("point ({u}, {v}) is outside the window")]
    OutsideWindow { u: f64, v: f64 },

    #[error("control bound violated at t={t}: |w|={w} > Lambda*v={bound}")]
    ControlBound { t: f64, w: f64, bound: f64 },

    #[error("initial point ({u}, {v}) is outside V- (needs v < 2pu/beta)")]
    OutsideVMinus { u: f64, v: f64 },

    #[error("power iteration did not converge after {iters} iterations (last estimate {estimate})")]
    PowerIteration { iters: usize, estimate: f64 },

    #[error("sample floor: need at least {required} samples, got {got}")]
    SampleFloor { required: usize, got: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
