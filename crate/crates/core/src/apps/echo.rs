use super::{MecApp, MecAppEnv, Outbox};
use crate::net::Datagram;

/// Returns every datagram to its sender unchanged.
#[derive(Debug)]
pub struct EchoMecApp {
    env: MecAppEnv,
}

impl EchoMecApp {
    pub fn new(env: MecAppEnv) -> Self {
        EchoMecApp { env }
    }

    pub fn env(&self) -> &MecAppEnv {
        &self.env
    }
}

impl MecApp for EchoMecApp {
    fn on_datagram(&mut self, datagram: &Datagram, out: &mut Outbox<'_>) {
        out.send(datagram.src, datagram.payload.clone());
    }
}
