//! Experiment orchestration, decode benchmarking and report emission.

mod bench;
mod config;
mod pipeline;
mod report;

pub use bench::{benchmark_decode, benchmark_interleaved, median, BenchTarget, BenchmarkResult};
pub use config::{
    BenchSettings, CorpusSettings, EvalSettings, ExperimentConfig, KdSettings, PruneSettings, QuantSettings,
    TeacherSpec,
};
pub use pipeline::{rerender, run_pipeline, token_agreement, write_report, Artifacts};
pub use report::{
    mmss, render_report, render_table1, render_table2, render_table3, ExperimentReport, KdRow, KdSummary,
    ModelRow, QuantRow, SplitSizes, Table, TrainSummary, REFERENCE_MEMORY_RATIO,
};
