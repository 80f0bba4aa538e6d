//! Configuration, price data, the online backtest loop, the offline optimum,
//! sweeps and result files.

mod backtest;
mod config;
mod export;
mod prices;
mod sweep;

pub use backtest::{
    compute_regret, offline_oracle, offline_oracle_prepared, prepare, prepare_with_prices, price_series,
    run_backtest, run_prepared, run_with_forecaster, terminal_curve, BacktestResult, OracleResult, Prepared,
    TrajectoryRecord, IDENTITY_TOL,
};
pub use config::{
    ForecasterBlock, ForecasterKind, LookaheadBlock, OutputBlock, PriceBlock, RunConfig, StorageBlock,
    Strategy, TerminalBlock, TerminalKind,
};
pub use export::{oracle_records, read_trajectory, write_ledger, write_summary, write_trajectory, RunSummary};
pub use prices::{
    format_timestamp, load_prices, parse_timestamp, read_prices, synthesize_prices, write_prices,
    SyntheticPriceSpec,
};
pub use sweep::{run_sweep, write_sweep, SweepRow};
