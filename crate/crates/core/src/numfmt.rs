/// Fixed 17-significant-digit scientific notation; parses back to the same
/// `f64` bit pattern.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let back: f64 = super::float(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
