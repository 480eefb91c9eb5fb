use crate::error::{Error, Result};

/// Transformer-style positional code: entry `2i` is `sin(pos / 10000^(2i/d))`
/// and entry `2i+1` the matching cosine.
pub fn sinusoidal_embedding(position: u32, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::invalid(format!("embedding dim must be even and positive, got {dim}")));
    }
    let pos = f64::from(position);
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let angle = pos / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_and_first_position() {
        assert_eq!(sinusoidal_embedding(0, 4).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
        let e = sinusoidal_embedding(1, 2).unwrap();
        // sin(1), cos(1) to 10 digits
        assert!((e[0] - 0.841_470_984_8).abs() < 1e-10);
        assert!((e[1] - 0.540_302_305_9).abs() < 1e-10);
    }

    #[test]
    fn odd_dim_rejected() {
        assert!(sinusoidal_embedding(3, 5).is_err());
        assert!(sinusoidal_embedding(3, 0).is_err());
    }

    #[test]
    fn small_positions_are_distinct() {
        let codes: Vec<_> = (0..10).map(|p| sinusoidal_embedding(p, 16).unwrap()).collect();
        for i in 0..10 {
            assert!(codes[i].iter().all(|v| (-1.0..=1.0).contains(v)));
            for j in i + 1..10 {
                assert_ne!(codes[i], codes[j]);
            }
        }
    }
}
