//! Vulnerable-road-user field: a rational elliptical kernel stretched along
//! the heading with speed and shifted forward by `lambda_f * |v_par|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scenario::AgentState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrfParams {
    /// Peak value.
    pub h: f64,
    /// Longitudinal base half-axis, m.
    pub gamma_l: f64,
    /// Lateral base half-axis, m.
    pub delta_w: f64,
    /// Longitudinal half-axis growth per m/s.
    pub k_pl: f64,
    /// Lateral half-axis growth per m/s.
    pub k_pw: f64,
    /// Forward shift per m/s.
    pub lambda_f: f64,
}

impl Default for VrfParams {
    fn default() -> Self {
        Self {
            h: 1.0,
            gamma_l: 2.0,
            delta_w: 1.0,
            k_pl: 0.8,
            k_pw: 0.3,
            lambda_f: 0.5,
        }
    }
}

impl VrfParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.h, self.gamma_l, self.delta_w, self.k_pl, self.k_pw, self.lambda_f];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("vrf parameters must be finite".into()));
        }
        if self.h <= 0.0 {
            return Err(Error::Config("vrf.h must be positive".into()));
        }
        if !(self.gamma_l > self.delta_w && self.delta_w > 0.0) {
            return Err(Error::Config("vrf requires gamma_l > delta_w > 0".into()));
        }
        if self.k_pl < 0.0 || self.k_pw < 0.0 || self.lambda_f < 0.0 {
            return Err(Error::Config("vrf gains k_pl, k_pw, lambda_f must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Velocity split into heading-parallel and heading-perpendicular parts.
/// Scenario agents move along their heading, so the perpendicular part is
/// zero; the kernel still accepts it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VruMotion {
    pub position: Point2,
    pub heading: f64,
    pub v_par: f64,
    pub v_perp: f64,
}

impl VruMotion {
    pub fn of_agent(agent: &AgentState) -> Self {
        Self {
            position: agent.position,
            heading: agent.heading,
            v_par: agent.speed,
            v_perp: 0.0,
        }
    }

    pub fn shifted_center(&self, params: &VrfParams) -> Point2 {
        self.position + Point2::from_angle(self.heading) * (params.lambda_f * self.v_par.abs())
    }

    /// Half-axes `(longitudinal, lateral)` of the kernel.
    pub fn half_axes(&self, params: &VrfParams) -> (f64, f64) {
        (
            params.gamma_l + params.k_pl * self.v_par.abs(),
            params.delta_w + params.k_pw * self.v_perp.abs(),
        )
    }

    pub fn kernel(&self, params: &VrfParams) -> VruKernel {
        let (ax_l, ax_w) = self.half_axes(params);
        VruKernel {
            center: self.shifted_center(params),
            tangent: Point2::from_angle(self.heading),
            ax_l,
            ax_w,
            h: params.h,
        }
    }

    pub fn value_at(&self, point: Point2, params: &VrfParams) -> f64 {
        self.kernel(params).value_at(point)
    }
}

/// Kernel with the centre shift and half-axes resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VruKernel {
    pub center: Point2,
    pub tangent: Point2,
    pub ax_l: f64,
    pub ax_w: f64,
    pub h: f64,
}

impl VruKernel {
    pub fn value_at(&self, point: Point2) -> f64 {
        let offset = point - self.center;
        let d_par = offset.dot(self.tangent);
        let d_perp = (offset - self.tangent * d_par).norm();
        let u = d_par / self.ax_l;
        let w = d_perp / self.ax_w;
        self.h / (u * u + w * w + 1.0)
    }
}

pub fn vrf(point: Point2, vru: &AgentState, params: &VrfParams) -> f64 {
    VruMotion::of_agent(vru).value_at(point, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::AgentKind;

    fn ped(speed: f64, heading: f64) -> AgentState {
        AgentState {
            id: "p".into(),
            kind: AgentKind::Pedestrian,
            position: Point2::new(1.0, -2.0),
            heading,
            speed,
            length: 0.5,
            width: 0.5,
            mass_kg: 0.0,
        }
    }

    #[test]
    fn peak_at_shifted_center() {
        let p = VrfParams::default();
        let walker = ped(2.0, 0.0);
        let center = Point2::new(2.0, -2.0);
        assert_eq!(vrf(center, &walker, &p), p.h);
        assert!(vrf(Point2::new(1.0, -2.0), &walker, &p) < p.h);
    }

    #[test]
    fn stationary_is_symmetric_fore_aft() {
        let p = VrfParams::default();
        let still = ped(0.0, 0.7);
        assert_eq!(vrf(still.position, &still, &p), p.h);
        let t = Point2::from_angle(0.7);
        let ahead = vrf(still.position + t * 1.3, &still, &p);
        let behind = vrf(still.position - t * 1.3, &still, &p);
        assert!((ahead - behind).abs() < 1e-15);
    }

    #[test]
    fn no_shift_reduces_to_centered_kernel() {
        let p = VrfParams {
            lambda_f: 0.0,
            ..VrfParams::default()
        };
        let walker = ped(1.5, 0.0);
        let q = Point2::new(2.0, -1.0);
        let (a, b) = (p.gamma_l + p.k_pl * 1.5, p.delta_w);
        let expected = p.h / ((1.0 / a).powi(2) + (1.0 / b).powi(2) + 1.0);
        assert!((vrf(q, &walker, &p) - expected).abs() < 1e-15);
    }

    #[test]
    fn invalid_ordering_rejected() {
        let p = VrfParams {
            gamma_l: 1.0,
            delta_w: 1.0,
            ..VrfParams::default()
        };
        assert!(p.validate().is_err());
    }
}
