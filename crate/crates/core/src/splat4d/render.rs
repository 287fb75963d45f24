//! Differentiable rasterizer for time-deformed anisotropic Gaussians.

use super::SplatScene;
use crate::image::Image;
use crate::linalg::{self, Mat3, Vec3};
use crate::projection::Camera;
use crate::scalar::{sigmoid, Real};

/// Screen-space dilation added to every projected covariance (px²).
pub const DILATION: f64 = 0.3;
/// Mahalanobis radius² beyond which a splat does not touch a pixel.
pub const SUPPORT: f64 = 9.0;
pub const MAX_ALPHA: f64 = 0.999;
/// Splats closer than this camera depth are skipped.
pub const NEAR: f64 = 0.01;

/// Per-splat geometry cached by the forward pass.
#[derive(Clone, Debug)]
struct Projection<S> {
    cam_point: Vec3<S>,
    mean: [S; 2],
    /// Inverse screen covariance `(a, b, c)` of `[[a, b], [b, c]]`.
    conic: [S; 3],
    t2: [[S; 3]; 2],
    rot: Mat3<S>,
    scale: Vec3<S>,
    cov3: Mat3<S>,
    opacity: S,
    color: [S; 3],
}

/// Rendered image in `S` precision plus the record needed for the backward pass.
#[derive(Clone, Debug)]
pub struct RenderOutput<S> {
    pub height: usize,
    pub width: usize,
    /// Planar `[3, h, w]` color.
    pub color: Vec<S>,
    /// Accumulated opacity `1 − T_final`.
    pub alpha: Vec<S>,
    projections: Vec<Option<Projection<S>>>,
    /// `(splat, pixel, α, transmittance before the splat)` in compositing order.
    entries: Vec<(u32, u32, S, S)>,
    tau: S,
}

impl<S: Real> RenderOutput<S> {
    pub fn image(&self) -> Image {
        Image {
            channels: 3,
            height: self.height,
            width: self.width,
            data: self.color.iter().map(|v| v.to_f32_lossy().clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn alpha_image(&self) -> Image {
        Image {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.alpha.iter().map(|v| v.to_f32_lossy().clamp(0.0, 1.0)).collect(),
        }
    }

    /// Number of (splat, pixel) contributions.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// Which splats touch which pixels, in order; used to detect perturbations
    /// that change the discrete structure of the render.
    pub fn signature(&self) -> Vec<(u32, u32)> {
        self.entries.iter().map(|e| (e.0, e.1)).collect()
    }
}

/// Gradients for every parameter group, shaped like [`SplatScene`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGrads<S> {
    pub position: Vec<Vec3<S>>,
    pub log_scale: Vec<Vec3<S>>,
    pub rotation: Vec<[S; 4]>,
    pub opacity_logit: Vec<S>,
    pub color_logit: Vec<Vec3<S>>,
    pub velocity: Vec<Vec3<S>>,
    pub accel: Vec<Vec3<S>>,
}

impl<S: Real> SplatGrads<S> {
    pub fn zeros(n: usize) -> Self {
        let z3 = [S::zero(); 3];
        Self {
            position: vec![z3; n],
            log_scale: vec![z3; n],
            rotation: vec![[S::zero(); 4]; n],
            opacity_logit: vec![S::zero(); n],
            color_logit: vec![z3; n],
            velocity: vec![z3; n],
            accel: vec![z3; n],
        }
    }

    pub fn add_assign(&mut self, o: &SplatGrads<S>) {
        fn add3<S: Real>(a: &mut [Vec3<S>], b: &[Vec3<S>]) {
            for (x, y) in a.iter_mut().zip(b) {
                for j in 0..3 {
                    x[j] += y[j];
                }
            }
        }
        add3(&mut self.position, &o.position);
        add3(&mut self.log_scale, &o.log_scale);
        add3(&mut self.color_logit, &o.color_logit);
        add3(&mut self.velocity, &o.velocity);
        add3(&mut self.accel, &o.accel);
        for (x, y) in self.rotation.iter_mut().zip(&o.rotation) {
            for j in 0..4 {
                x[j] += y[j];
            }
        }
        for (x, y) in self.opacity_logit.iter_mut().zip(&o.opacity_logit) {
            *x += *y;
        }
    }
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quat_to_mat<S: Real>(q: [S; 4]) -> Mat3<S> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    let two = S::lit(2.0);
    let one = S::one();
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Gradient of `Σ g_ij R_ij` with respect to the unnormalized quaternion.
fn quat_backward<S: Real>(q: [S; 4], g: &Mat3<S>) -> [S; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    let t = S::lit(2.0);
    let f = S::lit(4.0);
    let zero = S::zero();
    let dw = [[zero, -t * z, t * y], [t * z, zero, -t * x], [-t * y, t * x, zero]];
    let dx = [[zero, t * y, t * z], [t * y, -f * x, -t * w], [t * z, t * w, -f * x]];
    let dy = [[-f * y, t * x, t * w], [t * x, zero, t * z], [-t * w, t * z, -f * y]];
    let dz = [[-f * z, -t * w, t * x], [t * w, -f * z, t * y], [t * x, t * y, zero]];
    let contract = |d: &Mat3<S>| {
        let mut s = zero;
        for i in 0..3 {
            for j in 0..3 {
                s += g[i][j] * d[i][j];
            }
        }
        s
    };
    let gh = [contract(&dw), contract(&dx), contract(&dy), contract(&dz)];
    let qh = [w, x, y, z];
    let dot = (0..4).map(|i| gh[i] * qh[i]).sum::<S>();
    [0, 1, 2, 3].map(|i| (gh[i] - qh[i] * dot) / n)
}

fn mat_mul_2x3_3x3<S: Real>(a: &[[S; 3]; 2], b: &Mat3<S>) -> [[S; 3]; 2] {
    let mut out = [[S::zero(); 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|l| a[i][l] * b[l][j]).sum();
        }
    }
    out
}

/// Normalized time in `[0, 1]` for frame `t` of `frames`.
pub fn normalized_time<S: Real>(t: S, frames: usize) -> S {
    if frames <= 1 {
        S::zero()
    } else {
        t / S::from_usize(frames - 1).unwrap()
    }
}

fn project_splat<S: Real>(scene: &SplatScene<S>, i: usize, cam: &Camera<S>, tau: S) -> Option<Projection<S>> {
    let mut p = scene.position[i];
    if scene.motion_enabled[i] {
        for j in 0..3 {
            p[j] += scene.velocity[i][j] * tau + scene.accel[i][j] * tau * tau;
        }
    }
    let q = cam.to_camera(p);
    let (x, y, z) = (q[0], q[1], q[2]);
    if !(z > S::lit(NEAR)) {
        return None;
    }
    let (fx, fy) = (cam.fx, cam.fy);
    let mean = [fx * x / z + cam.cx, fy * y / z + cam.cy];
    let zero = S::zero();
    let j = [[fx / z, zero, -fx * x / (z * z)], [zero, fy / z, -fy * y / (z * z)]];
    let t2 = mat_mul_2x3_3x3(&j, &cam.rotation);
    let rot = quat_to_mat(scene.rotation[i]);
    let scale = scene.log_scale[i].map(|v| v.exp());
    let mut m = rot;
    for r in m.iter_mut() {
        for c in 0..3 {
            r[c] *= scale[c];
        }
    }
    let cov3 = linalg::mat_mul(&m, &linalg::transpose(&m));
    let tc = mat_mul_2x3_3x3(&t2, &cov3);
    let dot = |a: &[S; 3], b: &[S; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let dil = S::lit(DILATION);
    let (ca, cb, cc) = (dot(&tc[0], &t2[0]) + dil, dot(&tc[0], &t2[1]), dot(&tc[1], &t2[1]) + dil);
    let det = ca * cc - cb * cb;
    if !(det > zero) {
        return None;
    }
    let conic = [cc / det, -cb / det, ca / det];
    let opacity = sigmoid(scene.opacity_logit[i]);
    let color = scene.color_logit[i].map(sigmoid);
    Some(Projection { cam_point: q, mean, conic, t2, rot, scale, cov3, opacity, color })
}

/// Front-to-back compositing of the scene at (possibly fractional) frame `t`
/// over a black background.
pub fn render<S: Real>(scene: &SplatScene<S>, cam: &Camera<S>, t: S, height: usize, width: usize) -> RenderOutput<S> {
    let n = scene.len();
    let tau = normalized_time(t, scene.frames);
    let projections: Vec<Option<Projection<S>>> = (0..n).map(|i| project_splat(scene, i, cam, tau)).collect();
    let mut order: Vec<usize> = (0..n).filter(|&i| projections[i].is_some()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (projections[a].as_ref().unwrap().cam_point[2], projections[b].as_ref().unwrap().cam_point[2]);
        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });

    let plane = height * width;
    let mut color = vec![S::zero(); 3 * plane];
    let mut trans = vec![S::one(); plane];
    let mut entries = Vec::new();
    let support = S::lit(SUPPORT);
    let max_alpha = S::lit(MAX_ALPHA);
    let half = S::lit(0.5);
    for &i in &order {
        let pr = projections[i].as_ref().unwrap();
        let [a, b, c] = pr.conic;
        // bounding box of the support ellipse: |dx| ≤ 3 sqrt(Σ_xx), Σ = conic⁻¹
        let det_c = a * c - b * b;
        let (sxx, syy) = (c / det_c, a / det_c);
        let rx = S::lit(3.0) * sxx.sqrt();
        let ry = S::lit(3.0) * syy.sqrt();
        let x0 = (pr.mean[0] - rx - half).floor().to_f64_lossy().max(0.0);
        let x1 = (pr.mean[0] + rx - half).ceil().to_f64_lossy().min(width as f64 - 1.0);
        let y0 = (pr.mean[1] - ry - half).floor().to_f64_lossy().max(0.0);
        let y1 = (pr.mean[1] + ry - half).ceil().to_f64_lossy().min(height as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            continue;
        }
        for py in y0 as usize..=y1 as usize {
            let dy = S::from_usize(py).unwrap() + half - pr.mean[1];
            for px in x0 as usize..=x1 as usize {
                let dx = S::from_usize(px).unwrap() + half - pr.mean[0];
                let d2 = a * dx * dx + S::lit(2.0) * b * dx * dy + c * dy * dy;
                if d2 > support {
                    continue;
                }
                let alpha = (pr.opacity * (-half * d2).exp()).min(max_alpha);
                let p = py * width + px;
                let t_before = trans[p];
                let wgt = alpha * t_before;
                for ch in 0..3 {
                    color[ch * plane + p] += pr.color[ch] * wgt;
                }
                trans[p] = t_before * (S::one() - alpha);
                entries.push((i as u32, p as u32, alpha, t_before));
            }
        }
    }
    let alpha = trans.iter().map(|&t| S::one() - t).collect();
    RenderOutput { height, width, color, alpha, projections, entries, tau }
}

/// Backward pass of [`render`] for an upstream gradient on the planar color.
/// Groups of splats with frozen motion get exactly zero `v`/`a` gradients.
pub fn render_grad<S: Real>(scene: &SplatScene<S>, cam: &Camera<S>, out: &RenderOutput<S>, grad_color: &[S]) -> SplatGrads<S> {
    let n = scene.len();
    let plane = out.height * out.width;
    assert_eq!(grad_color.len(), 3 * plane, "gradient must match the rendered color");
    let mut grads = SplatGrads::zeros(n);
    let mut g_mean = vec![[S::zero(); 2]; n];
    let mut g_conic = vec![[S::zero(); 3]; n];
    let mut g_opacity = vec![S::zero(); n];
    let mut g_color = vec![[S::zero(); 3]; n];
    // color composited behind the current splat, relative to its transmittance
    let mut behind = vec![S::zero(); 3 * plane];
    let half = S::lit(0.5);
    let max_alpha = S::lit(MAX_ALPHA);
    for &(i, p, alpha, t_before) in out.entries.iter().rev() {
        let (i, p) = (i as usize, p as usize);
        let pr = out.projections[i].as_ref().unwrap();
        let mut g_alpha = S::zero();
        for ch in 0..3 {
            let g = grad_color[ch * plane + p];
            let bch = behind[ch * plane + p];
            g_color[i][ch] += g * alpha * t_before;
            g_alpha += g * t_before * (pr.color[ch] - bch);
            behind[ch * plane + p] = pr.color[ch] * alpha + (S::one() - alpha) * bch;
        }
        if alpha >= max_alpha {
            continue;
        }
        // α = o·exp(power)
        g_opacity[i] += g_alpha * alpha / pr.opacity;
        let g_power = g_alpha * alpha;
        let py = p / out.width;
        let px = p % out.width;
        let dx = S::from_usize(px).unwrap() + half - pr.mean[0];
        let dy = S::from_usize(py).unwrap() + half - pr.mean[1];
        let [a, b, c] = pr.conic;
        g_mean[i][0] += g_power * (a * dx + b * dy);
        g_mean[i][1] += g_power * (b * dx + c * dy);
        g_conic[i][0] += g_power * (-half * dx * dx);
        g_conic[i][1] += g_power * (-dx * dy);
        g_conic[i][2] += g_power * (-half * dy * dy);
    }

    let tau = out.tau;
    for i in 0..n {
        let Some(pr) = out.projections[i].as_ref() else { continue };
        let col = pr.color;
        for ch in 0..3 {
            grads.color_logit[i][ch] = g_color[i][ch] * col[ch] * (S::one() - col[ch]);
        }
        grads.opacity_logit[i] = g_opacity[i] * pr.opacity * (S::one() - pr.opacity);

        // conic = Σ2⁻¹  ⇒  dL/dΣ2 = −K G K with G the symmetric gradient matrix
        let [a, b, c] = pr.conic;
        let k = [[a, b], [b, c]];
        let gk = [[g_conic[i][0], g_conic[i][1] * half], [g_conic[i][1] * half, g_conic[i][2]]];
        let mut g_sigma = [[S::zero(); 2]; 2];
        for r in 0..2 {
            for s in 0..2 {
                let mut acc = S::zero();
                for u in 0..2 {
                    for v in 0..2 {
                        acc += k[r][u] * gk[u][v] * k[v][s];
                    }
                }
                g_sigma[r][s] = -acc;
            }
        }
        // Σ2 = T Σ3 Tᵀ + dI
        let t2 = &pr.t2;
        let tc = mat_mul_2x3_3x3(t2, &pr.cov3);
        let mut g_t2 = [[S::zero(); 3]; 2];
        for r in 0..2 {
            for j in 0..3 {
                g_t2[r][j] = S::lit(2.0) * (0..2).map(|s| g_sigma[r][s] * tc[s][j]).sum::<S>();
            }
        }
        let mut g_cov3 = [[S::zero(); 3]; 3];
        for u in 0..3 {
            for v in 0..3 {
                let mut acc = S::zero();
                for r in 0..2 {
                    for s in 0..2 {
                        acc += t2[r][u] * g_sigma[r][s] * t2[s][v];
                    }
                }
                g_cov3[u][v] = acc;
            }
        }
        // Σ3 = M Mᵀ with M = R diag(s)
        let mut m = pr.rot;
        for row in m.iter_mut() {
            for j in 0..3 {
                row[j] *= pr.scale[j];
            }
        }
        let mut g_m = [[S::zero(); 3]; 3];
        for u in 0..3 {
            for j in 0..3 {
                g_m[u][j] = S::lit(2.0) * (0..3).map(|v| g_cov3[u][v] * m[v][j]).sum::<S>();
            }
        }
        let mut g_rot = [[S::zero(); 3]; 3];
        for j in 0..3 {
            let mut gs = S::zero();
            for u in 0..3 {
                gs += g_m[u][j] * pr.rot[u][j];
                g_rot[u][j] = g_m[u][j] * pr.scale[j];
            }
            grads.log_scale[i][j] = gs * pr.scale[j];
        }
        grads.rotation[i] = quat_backward(scene.rotation[i], &g_rot);

        // T = J W  ⇒  dL/dJ = G_T Wᵀ
        let w = &cam.rotation;
        let mut g_j = [[S::zero(); 3]; 2];
        for r in 0..2 {
            for u in 0..3 {
                g_j[r][u] = (0..3).map(|v| g_t2[r][v] * w[u][v]).sum();
            }
        }
        let [x, y, z] = pr.cam_point;
        let (fx, fy) = (cam.fx, cam.fy);
        let z2 = z * z;
        let z3 = z2 * z;
        let two = S::lit(2.0);
        let mut gq = [S::zero(); 3];
        gq[0] += g_j[0][2] * (-fx / z2);
        gq[1] += g_j[1][2] * (-fy / z2);
        gq[2] += g_j[0][0] * (-fx / z2) + g_j[0][2] * (two * fx * x / z3) + g_j[1][1] * (-fy / z2) + g_j[1][2] * (two * fy * y / z3);
        let [gu, gv] = g_mean[i];
        gq[0] += gu * fx / z;
        gq[1] += gv * fy / z;
        gq[2] += -gu * fx * x / z2 - gv * fy * y / z2;
        let gp = linalg::mat_t_vec(w, gq);
        grads.position[i] = gp;
        if scene.motion_enabled[i] {
            grads.velocity[i] = gp.map(|g| g * tau);
            grads.accel[i] = gp.map(|g| g * tau * tau);
        }
    }
    grads
}
