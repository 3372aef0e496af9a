use crate::descriptors::{resource_fits, AppDescriptor, ResourceVector};

/// What the orchestrator sees of a host when placing an app.
#[derive(Debug, Clone, PartialEq)]
pub struct HostSnapshot {
    pub name: String,
    pub free: ResourceVector,
    pub services: Vec<String>,
}

impl HostSnapshot {
    /// Every required service runs on the platform and the compute demand fits.
    pub fn satisfies(&self, descriptor: &AppDescriptor) -> bool {
        descriptor.services_required.iter().all(|s| self.services.contains(s))
            && resource_fits(&descriptor.virtual_compute, &self.free)
    }
}

pub trait PlacementPolicy: Send {
    /// Pick a host among `hosts` (given in managed order), or `None`.
    fn select(&self, descriptor: &AppDescriptor, hosts: &[HostSnapshot]) -> Option<String>;
}

/// First host in managed order meeting the service and resource constraints.
#[derive(Debug, Default, Clone, Copy)]
pub struct FirstFit;

impl PlacementPolicy for FirstFit {
    fn select(&self, descriptor: &AppDescriptor, hosts: &[HostSnapshot]) -> Option<String> {
        hosts.iter().find(|h| h.satisfies(descriptor)).map(|h| h.name.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::MEGABYTE as MB;
    use std::collections::BTreeMap;

    fn descriptor(services: &[&str], cpu: u64) -> AppDescriptor {
        AppDescriptor {
            app_d_id: "WAA_DID".into(),
            app_name: "MECWarningAlertApp".into(),
            app_provider: "p".into(),
            virtual_compute: ResourceVector::new(10 * MB, 10 * MB, cpu),
            services_required: services.iter().map(|s| s.to_string()).collect(),
            emulated: None,
            extensions: BTreeMap::new(),
        }
    }

    fn hosts() -> Vec<HostSnapshot> {
        let free = ResourceVector::new(32 * MB, 32 * MB, 3000);
        vec![
            HostSnapshot { name: "mecHost1".into(), free, services: vec![] },
            HostSnapshot { name: "mecHost2".into(), free, services: vec!["LocationService".into()] },
        ]
    }

    #[test]
    fn service_requirement_drives_choice() {
        let d = descriptor(&["LocationService"], 1500);
        assert_eq!(FirstFit.select(&d, &hosts()).as_deref(), Some("mecHost2"));
    }

    #[test]
    fn first_in_order_when_all_fit() {
        let d = descriptor(&[], 1500);
        let hs = hosts();
        // Enumerate the qualifying candidates and take the first by position.
        let candidates: Vec<&str> = hs.iter().filter(|h| h.satisfies(&d)).map(|h| h.name.as_str()).collect();
        assert_eq!(candidates, vec!["mecHost1", "mecHost2"]);
        assert_eq!(FirstFit.select(&d, &hs).as_deref(), Some(candidates[0]));
        let reversed: Vec<_> = hs.into_iter().rev().collect();
        assert_eq!(FirstFit.select(&d, &reversed).as_deref(), Some("mecHost2"));
    }

    #[test]
    fn nothing_fits() {
        assert_eq!(FirstFit.select(&descriptor(&[], 5000), &hosts()), None);
    }
}
