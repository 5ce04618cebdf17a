use std::time::Duration;

use super::endpoint::Link;
use super::frame::HEADER_LEN;
use super::TransportError;

/// Fluid-link model: each frame waits `rtt/2 + payload/bandwidth` before it is sent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShaperConfig {
    pub bandwidth_bytes_per_sec: Option<f64>,
    pub rtt_ms: Option<f64>,
}

impl ShaperConfig {
    pub fn new(bandwidth_bytes_per_sec: Option<f64>, rtt_ms: Option<f64>) -> Result<Self, TransportError> {
        for v in [bandwidth_bytes_per_sec, rtt_ms].into_iter().flatten() {
            if !(v >= 0.0) {
                return Err(TransportError::InvalidConfig(format!("negative shaper value {v}")));
            }
        }
        if bandwidth_bytes_per_sec == Some(0.0) {
            return Err(TransportError::InvalidConfig("zero bandwidth".into()));
        }
        Ok(Self {
            bandwidth_bytes_per_sec,
            rtt_ms,
        })
    }

    pub fn is_passthrough(&self) -> bool {
        self.bandwidth_bytes_per_sec.map_or(true, f64::is_infinite) && self.rtt_ms.map_or(true, |r| r == 0.0)
    }

    pub fn delay_for(&self, payload_len: usize) -> Duration {
        let latency = self.rtt_ms.unwrap_or(0.0) / 2000.0;
        let transfer = match self.bandwidth_bytes_per_sec {
            Some(bw) if bw.is_finite() => payload_len as f64 / bw,
            _ => 0.0,
        };
        Duration::from_secs_f64(latency + transfer)
    }
}

pub(crate) struct ShapedLink {
    inner: Box<dyn Link>,
    cfg: ShaperConfig,
}

impl ShapedLink {
    pub(crate) fn new(inner: Box<dyn Link>, cfg: ShaperConfig) -> Self {
        Self { inner, cfg }
    }
}

impl Link for ShapedLink {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        let delay = self.cfg.delay_for(bytes.len().saturating_sub(HEADER_LEN));
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        self.inner.send_bytes(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_formula() {
        let c = ShaperConfig::new(Some(1e6), Some(100.0)).unwrap();
        let d = c.delay_for(500_000);
        assert!((d.as_secs_f64() - 0.55).abs() < 1e-9);
        assert!(ShaperConfig::default().is_passthrough());
        assert!(ShaperConfig::new(Some(f64::INFINITY), Some(0.0)).unwrap().is_passthrough());
        assert!(ShaperConfig::new(Some(-1.0), None).is_err());
    }
}
