use crate::error::{Error, Result};
use crate::image::Image;

/// `beta * prev + (1 - beta) * new`; returns `new` when there is no history.
pub fn ema_update(prev: Option<&Image>, new: &Image, beta: f64) -> Result<Image> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("ema beta must lie in [0, 1), got {beta}")));
    }
    match prev {
        None => Ok(new.clone()),
        Some(p) => p.zip_map(new, |a, b| beta * a + (1.0 - beta) * b),
    }
}
