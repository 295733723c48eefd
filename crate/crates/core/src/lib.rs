//! Software stack for a dual-camera FTIR optical fingerprint reader.
//!
//! The reader images the platen twice: an FTIR camera mounted beyond the
//! critical angle sees bright ridge contact, and a direct camera mounted below
//! it sees the finger surface in color. The modules follow the data flow:
//!
//! 1. [`optics`]: critical angle and camera placement checks.
//! 2. [`sim`]: deterministic synthetic dual-view renders standing in for the
//!    hardware, the failure-to-capture gate, and dataset generation.
//! 3. [`calibration`]: perspective transform estimation from checkerboard
//!    correspondences, warping, and native resolution maps.
//! 4. [`pipeline`]: raw FTIR frame to 500 ppi match-ready grayscale, plus the
//!    color conversion and box downsampling used by the feature extractors.
//! 5. [`features`]: rotation-invariant uniform LBP and cross-channel color
//!    LBP descriptors, feature fusion and the feature file container.
//! 6. [`classifier`]: deterministic linear SVM, cross-validated `C`
//!    selection and score fusion.
//! 7. [`evaluation`]: known-material and cross-material protocols and the
//!    detection rate at a fixed false detect rate.
//! 8. [`experiment`]: end-to-end runs, run summaries and timing probes.

pub mod calibration;
pub mod classifier;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod image;
pub mod optics;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use image::{ColorSpace, Image, ImageError};

/// Caps the worker threads used for per-sample work. Only the first call
/// takes effect; without the `parallel` feature work is sequential anyway.
pub fn set_jobs(jobs: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        false
    }
}

/// Order-preserving map over independent items, parallel when enabled.
pub(crate) fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
