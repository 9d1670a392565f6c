//! dB / linear conversions. Everything inside the crate is linear (watts,
//! power gains); these are only used at the I/O edges.

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert!((dbm_to_watts(23.0) - 0.199_526_231_496_887_9).abs() < 1e-15);
        assert!((dbm_to_watts(-20.0) - 1e-5).abs() < 1e-20);
        assert!((dbm_to_watts(-140.0) - 1e-17).abs() < 1e-31);
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(9.0)) - 9.0).abs() < 1e-12);
    }
}
