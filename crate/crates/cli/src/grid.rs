//! Grid specs of the form `start:stop:steps[:log]`, or a single number.

use std::str::FromStr;

use rfvar::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn single(value: f64) -> Self {
        Self {
            start: value,
            stop: value,
            steps: 1,
            spacing: Spacing::Linear,
        }
    }

    /// Grid points, endpoints included. The last point is `stop` exactly.
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let last = (self.steps - 1) as f64;
        let mut pts: Vec<f64> = (0..self.steps)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * t,
                    Spacing::Geometric => self.start * (self.stop / self.start).powf(t),
                }
            })
            .collect();
        pts[self.steps - 1] = self.stop;
        pts
    }
}

fn number(field: &str, text: &str) -> Result<f64, Error> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("grid {field} '{text}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("grid {field} must be finite")))
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            [v] => Self::single(number("value", v)?),
            [a, b, n] | [a, b, n, _] => {
                let steps: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("grid steps '{n}' is not a count")))?;
                let spacing = match parts.get(3).map(|t| t.trim()) {
                    None | Some("lin") => Spacing::Linear,
                    Some("log") => Spacing::Geometric,
                    Some(other) => return Err(Error::Config(format!("unknown grid spacing '{other}'"))),
                };
                Self {
                    start: number("start", a)?,
                    stop: number("stop", b)?,
                    steps,
                    spacing,
                }
            }
            _ => return Err(Error::Config(format!("grid '{s}' is not start:stop:steps"))),
        };
        if spec.steps == 0 {
            return Err(Error::Config("grid needs at least one step".into()));
        }
        if spec.steps > 1 && spec.start == spec.stop {
            return Err(Error::Config("grid start equals stop".into()));
        }
        if spec.spacing == Spacing::Geometric && !(spec.start > 0.0 && spec.stop > 0.0) {
            return Err(Error::Config("geometric grid needs positive endpoints".into()));
        }
        Ok(spec)
    }
}
