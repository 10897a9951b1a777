use crate::error::{Error, Result};

use super::clearing::assemble;
use super::program::{solve_relaxing, Angle, Limits, Program};
use super::{ClearingSolution, Market, ProgramKind};

impl Market {
    /// Real-time dispatch of one area (by position) against realized loads,
    /// with every boundary angle held at `theta_boundary` (boundary-system
    /// order). Line limits are widened uniformly if the area cannot be
    /// dispatched otherwise; the widening is reported on the solution.
    pub fn solve_realtime(&self, area: usize, theta_boundary: &[f64], loads: &[f64]) -> Result<ClearingSolution> {
        self.check_loads(loads)?;
        let sys = &self.blocks.boundary_system;
        if theta_boundary.len() != sys.len() {
            return Err(Error::Config(format!(
                "{} boundary angles given for {} boundary buses",
                theta_boundary.len(),
                sys.len()
            )));
        }
        if area >= self.part.num_areas() {
            return Err(Error::Config(format!("area position {area} out of range")));
        }
        let islanded = self.part.boundary_buses[area].is_empty();
        let build = |limits: Limits| -> Result<Program<'_>> {
            let mut p = Program::new(self, "real-time dispatch", limits);
            for (pos, &id) in sys.buses.iter().enumerate() {
                let k = self.net.bus_index(id).expect("validated");
                p.angle[k] = Angle::Fixed(theta_boundary[pos]);
            }
            let reference = self.area_reference(area);
            for &k in self.area_buses(area) {
                if p.angle[k] == Angle::Absent {
                    p.angle_var(k, islanded && k == reference);
                }
            }
            p.add_generators(self.area_generators(area).to_vec());
            for &k in self.area_buses(area) {
                p.add_balance(k, &self.incident[k], Vec::new(), loads[k])?;
            }
            for &k in self.internal_lines(area) {
                p.add_line(k)?;
            }
            Ok(p)
        };
        let (p, solved, relaxed) = solve_relaxing(build, true)?;
        Ok(assemble(&p, solved, ProgramKind::RealTime, Some(area), loads, &[], relaxed))
    }

    /// Real-time dispatch of one area as an island whose net export is held
    /// at `export_mw`, withdrawn at the proxy bus.
    pub fn solve_proxy_realtime(
        &self,
        area: usize,
        proxy_bus: usize,
        export_mw: f64,
        loads: &[f64],
    ) -> Result<ClearingSolution> {
        self.check_loads(loads)?;
        let proxy = self
            .net
            .bus_index(proxy_bus)
            .filter(|&k| self.area_of_bus(k) == area)
            .ok_or_else(|| Error::Config(format!("proxy bus {proxy_bus} is not in area position {area}")))?;
        let build = |limits: Limits| -> Result<Program<'_>> {
            let mut p = Program::new(self, "proxy real-time dispatch", limits);
            let reference = self.area_reference(area);
            for &k in self.area_buses(area) {
                p.angle_var(k, k == reference);
            }
            p.add_generators(self.area_generators(area).to_vec());
            let internal = self.internal_lines(area);
            for &k in self.area_buses(area) {
                let lines: Vec<usize> = self.incident[k]
                    .iter()
                    .copied()
                    .filter(|l| internal.contains(l))
                    .collect();
                let withdrawal = if k == proxy { loads[k] + export_mw } else { loads[k] };
                p.add_balance(k, &lines, Vec::new(), withdrawal)?;
            }
            for &k in internal {
                p.add_line(k)?;
            }
            Ok(p)
        };
        let (p, solved, relaxed) = solve_relaxing(build, true)?;
        let mut out = assemble(&p, solved, ProgramKind::ProxyRealTime, Some(area), loads, &[], relaxed);
        out.net_export_mw = vec![0.0; self.part.num_areas()];
        out.net_export_mw[area] = export_mw;
        Ok(out)
    }
}
