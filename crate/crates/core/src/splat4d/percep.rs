//! Feature-free perceptual loss: over a 3-level average-pooling pyramid, L1
//! between local 3×3 means plus L1 between horizontal and vertical gradient
//! magnitudes, averaged over levels.

use crate::scalar::Real;

pub const PERCEPTUAL_LEVELS: usize = 3;

#[derive(Clone, Debug)]
struct Planes<S> {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<S>,
}

impl<S: Real> Planes<S> {
    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> S {
        self.data[(c * self.h + y) * self.w + x]
    }

    fn pool(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let q = S::lit(0.25);
        let mut data = Vec::with_capacity(self.c * h * w);
        for c in 0..self.c {
            for y in 0..h {
                for x in 0..w {
                    data.push(
                        (self.at(c, 2 * y, 2 * x) + self.at(c, 2 * y, 2 * x + 1) + self.at(c, 2 * y + 1, 2 * x) + self.at(c, 2 * y + 1, 2 * x + 1)) * q,
                    );
                }
            }
        }
        Self { c: self.c, h, w, data }
    }

    fn box3(&self) -> Self {
        let ninth = S::lit(1.0 / 9.0);
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.c {
            for y in 0..self.h {
                for x in 0..self.w {
                    let mut acc = S::zero();
                    for yy in neighbors(y, self.h) {
                        for xx in neighbors(x, self.w) {
                            acc += self.at(c, yy, xx);
                        }
                    }
                    data.push(acc * ninth);
                }
            }
        }
        Self { data, ..*self }
    }
}

/// Clamped 3-neighborhood of `i` in `0..n`.
fn neighbors(i: usize, n: usize) -> [usize; 3] {
    [i.saturating_sub(1), i, (i + 1).min(n - 1)]
}

fn sign<S: Real>(v: S) -> S {
    if v > S::zero() {
        S::one()
    } else if v < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

fn pyramid<S: Real>(base: Planes<S>) -> Vec<Planes<S>> {
    let mut levels = vec![base];
    while levels.len() < PERCEPTUAL_LEVELS {
        let last = levels.last().unwrap();
        if last.h < 2 || last.w < 2 {
            break;
        }
        let next = last.pool();
        levels.push(next);
    }
    levels
}

/// Loss and gradient at one level with respect to `a`.
fn level_terms<S: Real>(a: &Planes<S>, b: &Planes<S>, want_grad: bool) -> (S, Vec<S>) {
    let (c, h, w) = (a.c, a.h, a.w);
    let mut grad = if want_grad { vec![S::zero(); a.data.len()] } else { Vec::new() };
    let idx = |ch: usize, y: usize, x: usize| (ch * h + y) * w + x;
    let mut loss = S::zero();

    let (ba, bb) = (a.box3(), b.box3());
    let n_box = S::from_usize(a.data.len()).unwrap();
    let ninth = S::lit(1.0 / 9.0);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let d = ba.at(ch, y, x) - bb.at(ch, y, x);
                loss += d.abs() / n_box;
                if want_grad {
                    let g = sign(d) / n_box * ninth;
                    for yy in neighbors(y, h) {
                        for xx in neighbors(x, w) {
                            grad[idx(ch, yy, xx)] += g;
                        }
                    }
                }
            }
        }
    }

    // horizontal then vertical gradient magnitudes
    for axis in 0..2 {
        let (hh, ww) = if axis == 0 { (h, w.saturating_sub(1)) } else { (h.saturating_sub(1), w) };
        if hh == 0 || ww == 0 {
            continue;
        }
        let n = S::from_usize(c * hh * ww).unwrap();
        for ch in 0..c {
            for y in 0..hh {
                for x in 0..ww {
                    let (y1, x1) = if axis == 0 { (y, x + 1) } else { (y + 1, x) };
                    let da = a.at(ch, y1, x1) - a.at(ch, y, x);
                    let db = b.at(ch, y1, x1) - b.at(ch, y, x);
                    let d = da.abs() - db.abs();
                    loss += d.abs() / n;
                    if want_grad {
                        let g = sign(d) * sign(da) / n;
                        grad[idx(ch, y1, x1)] += g;
                        grad[idx(ch, y, x)] -= g;
                    }
                }
            }
        }
    }
    (loss, grad)
}

fn evaluate<S: Real>(a: &[S], b: &[S], channels: usize, height: usize, width: usize, want_grad: bool) -> (S, Vec<S>) {
    assert_eq!(a.len(), channels * height * width);
    assert_eq!(b.len(), a.len());
    let pa = pyramid(Planes { c: channels, h: height, w: width, data: a.to_vec() });
    let pb = pyramid(Planes { c: channels, h: height, w: width, data: b.to_vec() });
    let inv_levels = S::one() / S::from_usize(pa.len()).unwrap();
    let mut total = S::zero();
    let mut level_grads = Vec::with_capacity(pa.len());
    for (la, lb) in pa.iter().zip(&pb) {
        let (l, g) = level_terms(la, lb, want_grad);
        total += l * inv_levels;
        level_grads.push(g);
    }
    if !want_grad {
        return (total, Vec::new());
    }
    // pull each level's gradient back to full resolution through the pooling adjoint
    let mut acc: Option<Vec<S>> = None;
    for lvl in (0..pa.len()).rev() {
        let mut g: Vec<S> = level_grads[lvl].iter().map(|&v| v * inv_levels).collect();
        if let Some(coarser) = acc.take() {
            let (ch, h, w) = (pa[lvl].c, pa[lvl].h, pa[lvl].w);
            let (hc, wc) = (pa[lvl + 1].h, pa[lvl + 1].w);
            let q = S::lit(0.25);
            for c in 0..ch {
                for y in 0..hc {
                    for x in 0..wc {
                        let v = coarser[(c * hc + y) * wc + x] * q;
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            g[(c * h + 2 * y + dy) * w + 2 * x + dx] += v;
                        }
                    }
                }
            }
        }
        acc = Some(g);
    }
    (total, acc.unwrap())
}

/// Perceptual surrogate between planar `[channels, h, w]` buffers.
pub fn perceptual_loss<S: Real>(a: &[S], b: &[S], channels: usize, height: usize, width: usize) -> S {
    evaluate(a, b, channels, height, width, false).0
}

/// Loss and its gradient with respect to `a` (`b` is a fixed target).
pub fn perceptual_loss_grad<S: Real>(a: &[S], b: &[S], channels: usize, height: usize, width: usize) -> (S, Vec<S>) {
    evaluate(a, b, channels, height, width, true)
}
