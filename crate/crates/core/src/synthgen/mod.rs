//! Deterministic synthetic scenes with exact ground truth.

mod fixture;
mod scene;
mod texture;

pub use self::fixture::{
    make_fixture, make_recognition_fixture, target_label, FixtureConfig, LabeledBurst,
    RecognitionFixture, TargetSpec,
};
pub use self::scene::{render, FrameTruth, ObjectSpec, SceneScript, Shape, Trajectory};
pub use self::texture::{disc_correlation, Background, Decal, Texture, TextureParams, Wave};
