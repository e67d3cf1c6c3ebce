use crate::{Result, C64};

pub(crate) struct Workspace {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Workspace {
    pub(crate) fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }
}

/// One classical RK4 step, in place.
#[allow(clippy::needless_range_loop)]
pub(crate) fn step<F>(w: &mut Workspace, t: f64, dt: f64, x: &mut [C64], mut f: F) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]) -> Result<()>,
{
    let h = dt;
    f(t, x, &mut w.k1)?;
    for i in 0..x.len() {
        w.tmp[i] = x[i] + w.k1[i] * (0.5 * h);
    }
    f(t + 0.5 * h, &w.tmp, &mut w.k2)?;
    for i in 0..x.len() {
        w.tmp[i] = x[i] + w.k2[i] * (0.5 * h);
    }
    f(t + 0.5 * h, &w.tmp, &mut w.k3)?;
    for i in 0..x.len() {
        w.tmp[i] = x[i] + w.k3[i] * h;
    }
    f(t + h, &w.tmp, &mut w.k4)?;
    for i in 0..x.len() {
        x[i] += (w.k1[i] + (w.k2[i] + w.k3[i]) * 2.0 + w.k4[i]) * (h / 6.0);
    }
    Ok(())
}
