//! The chapters of `book/` as modules, so their snippets run as doc-tests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(distance_transforms, "distance-transforms.md");
chapter!(targets, "targets.md");
chapter!(loss, "loss.md");
chapter!(autodiff, "autodiff.md");
chapter!(training, "training.md");
chapter!(metrics, "metrics.md");
chapter!(formats, "formats.md");

#[doc = include_str!("../../../README.md")]
pub mod readme {}
