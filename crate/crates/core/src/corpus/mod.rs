//! Dataset handling: trip termination, train/validation/test splits and the
//! per-cell vehicle accumulation that serves as network traffic state.

mod accumulation;
mod dataset;

pub use accumulation::{
    compute_accumulation, compute_accumulation_over, minute_of, read_accumulation,
    traffic_window, write_accumulation, AccumulationSeries, NormalizedSeries, TrafficStateTensor,
    WINDOW_MINUTES,
};
pub use dataset::{
    load_and_terminate, read_sequences, split_dataset, write_sequences, Dataset, Split, Splits,
    TripSequence, TRIP_GAP_SECONDS,
};
