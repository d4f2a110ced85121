//! Shared fixtures for the engine benchmarks.

use spinsys_core::{Configuration, LatticeBox, RateModel, Site, WeightFamily};

pub fn contact() -> RateModel {
    RateModel::contact(1, 1.5).expect("valid rate")
}

pub fn glauber_2d() -> RateModel {
    RateModel::glauber(2, 0.4).expect("valid rate")
}

pub fn alternating() -> Configuration {
    "bg=period:10; dev=".parse().expect("valid configuration")
}

pub fn uniform() -> WeightFamily {
    WeightFamily::uniform()
}

pub fn line(radius: u32) -> LatticeBox {
    LatticeBox::new(1, radius)
}

pub fn origin() -> Site {
    Site::d1(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(contact().dim(), 1);
        assert_eq!(glauber_2d().dim(), 2);
        assert!(alternating().eval(&Site::d1(0)));
        assert_eq!(line(3).len(), 7);
    }
}
