use crate::error::{Error, Result};

/// Magnitude above which a stored flow component marks the pixel unknown.
pub const UNKNOWN_FLOW_THRESHOLD: f32 = 1e9;

/// Value stored for both components of an invalid pixel.
pub const UNKNOWN_FLOW: f32 = 1e10;

/// Dense per-pixel displacement `(u, v)` in pixels (u rightward, v downward)
/// with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    // interleaved (u, v)
    uv: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            uv: vec![0.0; width * height * 2],
            valid: vec![true; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        let uv = std::iter::repeat_n([u, v], width * height)
            .flatten()
            .collect();
        Self {
            width,
            height,
            uv,
            valid: vec![true; width * height],
        }
    }

    /// Builds a field from interleaved `(u, v)` values; every pixel with a
    /// finite displacement is valid.
    pub fn from_interleaved(width: usize, height: usize, uv: Vec<f32>) -> Result<Self> {
        if uv.len() != width * height * 2 {
            return Err(Error::InvalidFrame(format!(
                "flow payload has {} values, expected {}",
                uv.len(),
                width * height * 2
            )));
        }
        let valid = uv
            .chunks_exact(2)
            .map(|p| p[0].is_finite() && p[1].is_finite())
            .collect();
        Ok(Self {
            width,
            height,
            uv,
            valid,
        })
    }

    /// Builds a field with an explicit validity mask.
    pub fn with_validity(
        width: usize,
        height: usize,
        uv: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let mut field = Self::from_interleaved(width, height, uv)?;
        if valid.len() != width * height {
            return Err(Error::InvalidFrame("validity mask length mismatch".into()));
        }
        for (i, ok) in valid.into_iter().enumerate() {
            field.valid[i] = field.valid[i] && ok;
            if !field.valid[i] {
                field.uv[2 * i] = UNKNOWN_FLOW;
                field.uv[2 * i + 1] = UNKNOWN_FLOW;
            }
        }
        Ok(field)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Self {
        let mut uv = Vec::with_capacity(width * height * 2);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                uv.push(u);
                uv.push(v);
            }
        }
        let valid = uv
            .chunks_exact(2)
            .map(|p| p[0].is_finite() && p[1].is_finite())
            .collect();
        Self {
            width,
            height,
            uv,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = 2 * (y * self.width + x);
        (self.uv[i], self.uv[i + 1])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn interleaved(&self) -> &[f32] {
        &self.uv
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Bilinear sample of the displacement at a sub-pixel position (border clamped).
    pub fn sample(&self, x: f32, y: f32) -> (f32, f32) {
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f32;
        let fy = yc - y0 as f32;
        let mut out = [0.0f32; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let a = self.uv[2 * (y0 * self.width + x0) + k];
            let b = self.uv[2 * (y0 * self.width + x1) + k];
            let c = self.uv[2 * (y1 * self.width + x0) + k];
            let d = self.uv[2 * (y1 * self.width + x1) + k];
            *o = (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
        }
        (out[0], out[1])
    }

    /// Resamples the field to a new resolution, scaling displacements by the
    /// size ratio. Validity is taken from the nearest source pixel.
    pub fn resize(&self, width: usize, height: usize) -> FlowField {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut uv = Vec::with_capacity(width * height * 2);
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let src_x = (x as f32 + 0.5) * sx - 0.5;
                let src_y = (y as f32 + 0.5) * sy - 0.5;
                let (u, v) = self.sample(src_x, src_y);
                uv.push(u / sx);
                uv.push(v / sy);
                let nx = (src_x.round().max(0.0) as usize).min(self.width - 1);
                let ny = (src_y.round().max(0.0) as usize).min(self.height - 1);
                valid.push(self.valid[ny * self.width + nx]);
            }
        }
        FlowField {
            width,
            height,
            uv,
            valid,
        }
    }

    pub fn negated(&self) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            uv: self.uv.iter().map(|v| -v).collect(),
            valid: self.valid.clone(),
        }
    }
}
