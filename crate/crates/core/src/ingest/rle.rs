//! Text run-length encoding for binary masks: comma-separated `value:count`
//! runs in row-major order, values in {0, 1}.

use crate::error::{Error, Result};
use crate::model::{ImageGrid, Mask};

pub fn encode(mask: &Mask) -> String {
    let mut runs: Vec<(bool, usize)> = Vec::new();
    for &b in mask.bits() {
        match runs.last_mut() {
            Some((v, n)) if *v == b => *n += 1,
            _ => runs.push((b, 1)),
        }
    }
    runs.iter().map(|(v, n)| format!("{}:{}", u8::from(*v), n)).collect::<Vec<_>>().join(",")
}

pub fn decode(text: &str, grid: ImageGrid, segment: &str) -> Result<Mask> {
    let bad = |message: String| Error::BadRle { segment: segment.to_string(), message };
    let mut bits = Vec::with_capacity(grid.len());
    for run in text.split(',').map(str::trim).filter(|r| !r.is_empty()) {
        let (value, count) = run.split_once(':').ok_or_else(|| bad(format!("run {run:?} is not value:count")))?;
        let value = match value.trim() {
            "0" => false,
            "1" => true,
            v => return Err(bad(format!("run value {v:?} is not 0 or 1"))),
        };
        let count: usize =
            count.trim().parse().map_err(|_| bad(format!("run count {count:?} is not a non-negative integer")))?;
        if bits.len() + count > grid.len() {
            return Err(bad(format!("runs exceed {} cells", grid.len())));
        }
        bits.resize(bits.len() + count, value);
    }
    if bits.len() != grid.len() {
        return Err(bad(format!("runs cover {} cells, grid has {}", bits.len(), grid.len())));
    }
    Mask::from_bits(grid, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_example_runs() {
        let grid = ImageGrid::new(2, 5).unwrap();
        let mask = decode("0:3,1:2,0:1,1:3,0:1", grid, "s").unwrap();
        // independent scalar loop over the expected layout
        let mut expected = 0;
        for (i, &b) in mask.bits().iter().enumerate() {
            assert_eq!(b, (3..5).contains(&i) || (6..9).contains(&i));
            expected += usize::from(b);
        }
        assert_eq!(mask.count(), 5);
        assert_eq!(expected, 5);
    }

    #[test]
    fn rejects_wrong_length_and_garbage() {
        let grid = ImageGrid::new(2, 2).unwrap();
        assert!(matches!(decode("1:3", grid, "s"), Err(Error::BadRle { .. })));
        assert!(matches!(decode("1:5", grid, "s"), Err(Error::BadRle { .. })));
        assert!(matches!(decode("2:4", grid, "s"), Err(Error::BadRle { .. })));
        assert!(matches!(decode("1-4", grid, "s"), Err(Error::BadRle { .. })));
        assert!(matches!(decode("", grid, "s"), Err(Error::BadRle { .. })));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(h in 1usize..64, w in 1usize..64, seed in any::<u64>(), density in 0.0f64..1.0) {
            use rand::{Rng, SeedableRng};
            let grid = ImageGrid::new(h, w).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mask = Mask::from_fn(grid, |_, _| rng.random_bool(density));
            let text = encode(&mask);
            prop_assert_eq!(decode(&text, grid, "p").unwrap(), mask);
        }
    }
}
