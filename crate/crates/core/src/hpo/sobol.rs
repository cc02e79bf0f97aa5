/// Identifier recorded in reports so results can be tied to the exact generator.
pub const GENERATOR: &str = "owen-scrambled-sobol/v1 (sobol_burley 0.5, seed folded to 32 bits)";

/// Largest number of points a single sequence provides.
pub const MAX_POINTS: u64 = 1 << 16;

/// Owen-scrambled Sobol sequence; every axis is base 2, so aligned blocks of
/// `2^k` points put exactly one point in each of the `2^k` equal cells.
#[derive(Debug, Clone)]
pub struct ScrambledSobol {
    dims: usize,
    seed: u32,
}

impl ScrambledSobol {
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(
            dims <= sobol_burley::NUM_DIMENSIONS as usize,
            "at most {} dimensions",
            sobol_burley::NUM_DIMENSIONS
        );
        ScrambledSobol {
            dims,
            seed: (seed ^ (seed >> 32)) as u32,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Point `index` in `[0, 1)^dims`.
    pub fn point(&self, index: u64) -> Vec<f64> {
        assert!(index < MAX_POINTS, "at most {MAX_POINTS} points");
        (0..self.dims as u32)
            .map(|d| f64::from(sobol_burley::sample(index as u32, d, self.seed)))
            .collect()
    }
}
