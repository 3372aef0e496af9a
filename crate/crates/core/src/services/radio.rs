//! Synthetic mobility and radio model feeding the MEC services.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// CQI as a linear function of distance to the serving cell:
/// `clamp(round(15 * (1 - d / d_max)), 0, 15)`.
pub fn cqi_model(distance: f64, d_max: f64) -> u8 {
    let raw = (15.0 * (1.0 - distance / d_max)).round();
    raw.clamp(0.0, 15.0) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gnb {
    pub id: String,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UeState {
    pub ue_id: String,
    pub position: Point,
    pub velocity: Point,
    pub serving_cell: Option<String>,
    pub cqi: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellChange {
    pub ue_id: String,
    pub from: Option<String>,
    pub to: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RadioEnvironment {
    gnbs: Vec<Gnb>,
    ues: BTreeMap<String, UeState>,
    cqi_max_distance: f64,
}

impl RadioEnvironment {
    pub fn new(gnbs: Vec<Gnb>, cqi_max_distance: f64) -> Self {
        RadioEnvironment { gnbs, ues: BTreeMap::new(), cqi_max_distance }
    }

    pub fn gnbs(&self) -> &[Gnb] {
        &self.gnbs
    }

    pub fn add_ue(&mut self, ue_id: impl Into<String>, position: Point, velocity: Point) -> &UeState {
        let ue_id = ue_id.into();
        let mut state = UeState { ue_id: ue_id.clone(), position, velocity, serving_cell: None, cqi: 0 };
        self.refresh(&mut state);
        self.ues.insert(ue_id.clone(), state);
        &self.ues[&ue_id]
    }

    pub fn ue(&self, ue_id: &str) -> Option<&UeState> {
        self.ues.get(ue_id)
    }

    pub fn ues(&self) -> impl Iterator<Item = &UeState> {
        self.ues.values()
    }

    /// Nearest gNB to `p`; equal distances resolve to the lowest id.
    pub fn nearest_gnb(&self, p: &Point) -> Option<(&Gnb, f64)> {
        self.gnbs
            .iter()
            .map(|g| (g, g.position.distance(p)))
            .min_by(|(ga, da), (gb, db)| da.total_cmp(db).then_with(|| ga.id.cmp(&gb.id)))
    }

    fn refresh(&self, ue: &mut UeState) {
        match self.nearest_gnb(&ue.position) {
            Some((g, d)) => {
                ue.serving_cell = Some(g.id.clone());
                ue.cqi = cqi_model(d, self.cqi_max_distance);
            }
            None => {
                ue.serving_cell = None;
                ue.cqi = 0;
            }
        }
    }

    /// Advance every UE by `velocity * dt` and recompute serving cell and CQI.
    /// Returns the UEs whose serving cell changed. Non-positive `dt` is a no-op.
    pub fn step(&mut self, dt: f64) -> Vec<CellChange> {
        if !(dt > 0.0) {
            return Vec::new();
        }
        let mut ues = std::mem::take(&mut self.ues);
        let mut changes = Vec::new();
        for ue in ues.values_mut() {
            ue.position.x += ue.velocity.x * dt;
            ue.position.y += ue.velocity.y * dt;
            let before = ue.serving_cell.clone();
            self.refresh(ue);
            if ue.serving_cell != before {
                changes.push(CellChange { ue_id: ue.ue_id.clone(), from: before, to: ue.serving_cell.clone() });
            }
        }
        self.ues = ues;
        changes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> RadioEnvironment {
        RadioEnvironment::new(
            vec![
                Gnb { id: "gnb1".into(), position: Point::new(0.0, 0.0) },
                Gnb { id: "gnb2".into(), position: Point::new(100.0, 0.0) },
            ],
            1000.0,
        )
    }

    #[test]
    fn step_moves_ue() {
        let mut e = env();
        e.add_ue("ue", Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        e.step(1.0);
        assert_eq!(e.ue("ue").unwrap().position, Point::new(10.0, 0.0));
        e.step(1.0);
        assert_eq!(e.ue("ue").unwrap().position, Point::new(20.0, 0.0));
    }

    #[test]
    fn serving_cell_is_nearest_with_id_tiebreak() {
        let mut e = env();
        e.add_ue("a", Point::new(60.0, 0.0), Point::default());
        e.add_ue("b", Point::new(50.0, 0.0), Point::default());
        assert_eq!(e.ue("a").unwrap().serving_cell.as_deref(), Some("gnb2"));
        assert_eq!(e.ue("b").unwrap().serving_cell.as_deref(), Some("gnb1"));
    }

    #[test]
    fn cell_change_reported() {
        let mut e = env();
        e.add_ue("a", Point::new(45.0, 0.0), Point::new(10.0, 0.0));
        let changes = e.step(1.0);
        assert_eq!(changes.len(), 1);
        assert_eq!(changes[0].to.as_deref(), Some("gnb2"));
        assert!(e.step(1.0).is_empty());
    }

    #[test]
    fn cqi_examples() {
        assert_eq!(cqi_model(0.0, 1000.0), 15);
        assert_eq!(cqi_model(1000.0, 1000.0), 0);
        assert_eq!(cqi_model(5000.0, 1000.0), 0);
        // 15 * (1 - 1/3) = 10 exactly in real arithmetic.
        for d_max in [3.0, 300.0, 1234.5, 1e6] {
            assert_eq!(cqi_model(d_max / 3.0, d_max), 10);
        }
        let mut e = env();
        e.add_ue("at-site", Point::new(100.0, 0.0), Point::default());
        assert_eq!(e.ue("at-site").unwrap().cqi, 15);
    }
}
