use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// RAM and disk in bytes, CPU in instructions per second.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    pub ram: u64,
    pub disk: u64,
    pub cpu: u64,
}

pub const MEGABYTE: u64 = 1_000_000;

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { ram: 0, disk: 0, cpu: 0 };

    pub fn new(ram: u64, disk: u64, cpu: u64) -> Self {
        ResourceVector { ram, disk, cpu }
    }

    /// Component-wise `self <= other`.
    pub fn le(&self, other: &ResourceVector) -> bool {
        self.ram <= other.ram && self.disk <= other.disk && self.cpu <= other.cpu
    }

    /// `None` if any component would go below zero.
    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            ram: self.ram.checked_sub(other.ram)?,
            disk: self.disk.checked_sub(other.disk)?,
            cpu: self.cpu.checked_sub(other.cpu)?,
        })
    }

    pub fn checked_add(&self, other: &ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            ram: self.ram.checked_add(other.ram)?,
            disk: self.disk.checked_add(other.disk)?,
            cpu: self.cpu.checked_add(other.cpu)?,
        })
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        self.checked_add(&rhs).expect("resource vector overflow")
    }
}

impl std::iter::Sum for ResourceVector {
    fn sum<I: Iterator<Item = ResourceVector>>(iter: I) -> Self {
        iter.fold(ResourceVector::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(ram {} B, disk {} B, cpu {} instr/s)", self.ram, self.disk, self.cpu)
    }
}

/// True iff `demand` fits into `free` in every component.
pub fn resource_fits(demand: &ResourceVector, free: &ResourceVector) -> bool {
    demand.le(free)
}

/// Parse a non-negative quantity given either as a JSON number or as a
/// string with an optional decimal unit suffix (`B`, `kB`, `MB`, `GB`).
/// The result must be a whole number.
pub fn parse_quantity(value: &serde_json::Value) -> Option<u64> {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                Some(u)
            } else {
                whole(n.as_f64()?)
            }
        }
        serde_json::Value::String(s) => {
            let s = s.trim();
            let split = s
                .find(|c: char| !(c.is_ascii_digit() || c == '.'))
                .unwrap_or(s.len());
            let (num, unit) = s.split_at(split);
            let factor = match unit.trim() {
                "" | "B" => 1.0,
                "kB" | "KB" => 1e3,
                "MB" => 1e6,
                "GB" => 1e9,
                _ => return None,
            };
            let num: f64 = num.parse().ok()?;
            whole(num * factor)
        }
        _ => None,
    }
}

fn whole(x: f64) -> Option<u64> {
    if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Some(x as u64)
    } else {
        None
    }
}
