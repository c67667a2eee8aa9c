//! Single-channel float images and the handful of filters the solver needs.
//! Borders are handled by replicating the edge pixel.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            data: vec![0.0; w * h],
        }
    }

    pub fn from_vec(w: usize, h: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), w * h);
        Self { w, h, data }
    }

    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.w - 1) as f32);
        let y = y.clamp(0.0, (self.h - 1) as f32);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let a = self.at(x0, y0);
        let b = self.at(x0 + 1, y0);
        let c = self.at(x0, y0 + 1);
        let d = self.at(x0 + 1, y0 + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn gaussian_blur(&self, sigma: f32) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f32> = (-radius..=radius)
            .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f32 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= norm);

        let mut tmp = Plane::zeros(self.w, self.h);
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    acc += k * self.at(x + i, y);
                }
                tmp.data[y as usize * self.w + x as usize] = acc;
            }
        }
        let mut out = Plane::zeros(self.w, self.h);
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    acc += k * tmp.at(x, y + i);
                }
                out.data[y as usize * self.w + x as usize] = acc;
            }
        }
        out
    }

    /// Resamples to `w x h` with pixel centres aligned.
    pub fn resize(&self, w: usize, h: usize) -> Plane {
        let sx = self.w as f32 / w as f32;
        let sy = self.h as f32 / h as f32;
        let mut out = Plane::zeros(w, h);
        for y in 0..h {
            let yy = (y as f32 + 0.5) * sy - 0.5;
            for x in 0..w {
                let xx = (x as f32 + 0.5) * sx - 0.5;
                out.data[y * w + x] = self.bilinear(xx, yy);
            }
        }
        out
    }

    /// Central differences.
    pub fn gradient(&self) -> (Plane, Plane) {
        let mut gx = Plane::zeros(self.w, self.h);
        let mut gy = Plane::zeros(self.w, self.h);
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let i = y as usize * self.w + x as usize;
                gx.data[i] = 0.5 * (self.at(x + 1, y) - self.at(x - 1, y));
                gy.data[i] = 0.5 * (self.at(x, y + 1) - self.at(x, y - 1));
            }
        }
        (gx, gy)
    }

    /// Samples the plane at `x + u(x)`.
    pub fn warp(&self, u: &Plane, v: &Plane) -> Plane {
        let mut out = Plane::zeros(self.w, self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                out.data[i] = self.bilinear(x as f32 + u.data[i], y as f32 + v.data[i]);
            }
        }
        out
    }

    pub fn median3(&self) -> Plane {
        let mut out = Plane::zeros(self.w, self.h);
        let mut win = [0f32; 9];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let mut k = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        win[k] = self.at(x + dx, y + dy);
                        k += 1;
                    }
                }
                win.sort_unstable_by(f32::total_cmp);
                out.data[y as usize * self.w + x as usize] = win[4];
            }
        }
        out
    }

    pub fn scaled(mut self, s: f32) -> Plane {
        self.data.iter_mut().for_each(|x| *x *= s);
        self
    }
}
