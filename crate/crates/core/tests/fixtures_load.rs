use std::path::{Path, PathBuf};

use qrecycle::data::{self, BlockGrid};
use qrecycle::Encoder;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn fashion_fixture_is_balanced_and_encodable() {
    for (split, per_class) in [("train", 250), ("test", 125)] {
        let ds = data::load_idx(
            fixture(&format!("fashion1289-{split}-images-idx3-ubyte.gz")),
            fixture(&format!("fashion1289-{split}-labels-idx1-ubyte.gz")),
        )
        .unwrap();
        let hist = ds.histogram();
        assert_eq!(hist.len(), 4);
        for class in [1u8, 2, 8, 9] {
            assert_eq!(hist[&class], per_class, "{split} class {class}");
        }
        let mapped = data::filter_split(&ds, &[1, 2, 8, 9]).unwrap();
        let samples = data::to_samples(&mapped, Encoder::Amplitude, BlockGrid::default()).unwrap();
        assert_eq!(samples.len(), 4 * per_class);
        assert!(samples.iter().all(|s| s.label < 4 && s.features.dim() == 256));
    }
}
