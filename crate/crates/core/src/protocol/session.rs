use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::thread;
use std::time::Duration;

use super::roles::{run_csp, run_ta, run_user, CspOutput, FedSvdResult, TaOutput, TranscriptEntry, UserInput};
use super::{ProtocolError, SessionConfig};
use crate::linalg::DenseMatrix;
use crate::transport::{memory_network, Endpoint, PartyId, TcpEndpointBuilder, TransportError};

/// Outputs of every role of one session.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub ta: TaOutput,
    pub csp: CspOutput,
    pub users: Vec<FedSvdResult>,
}

impl SessionOutcome {
    /// All role logs, in the order TA, CSP, users.
    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        let mut out = self.ta.transcript.clone();
        out.extend(self.csp.transcript.iter().cloned());
        for u in &self.users {
            out.extend(u.transcript.iter().cloned());
        }
        out
    }

    /// Line-delimited log, one exchange per line.
    pub fn transcript_log(&self) -> String {
        self.transcript().iter().map(|e| format!("{e}\n")).collect()
    }
}

pub(crate) fn parties(k: usize) -> Vec<PartyId> {
    let mut p = vec![PartyId::Ta, PartyId::Csp];
    p.extend((0..k as u32).map(PartyId::User));
    p
}

/// Runs a session over an in-memory network, one thread per role.
pub fn run_fedsvd(
    cfg: &SessionConfig,
    data: &[DenseMatrix],
    label: Option<&[f64]>,
) -> Result<SessionOutcome, ProtocolError> {
    cfg.validate()?;
    run_fedsvd_on(cfg, data, label, memory_network(&parties(cfg.k())))
}

/// Runs a session over caller-supplied endpoints for the TA, the CSP and
/// every user.
pub fn run_fedsvd_on(
    cfg: &SessionConfig,
    data: &[DenseMatrix],
    label: Option<&[f64]>,
    mut endpoints: BTreeMap<PartyId, Endpoint>,
) -> Result<SessionOutcome, ProtocolError> {
    cfg.validate()?;
    if data.len() != cfg.k() {
        return Err(ProtocolError::Config(format!(
            "{} data blocks for {} users",
            data.len(),
            cfg.k()
        )));
    }
    let mut take = |p: PartyId| {
        endpoints
            .remove(&p)
            .ok_or_else(|| ProtocolError::Config(format!("no endpoint for {p}")))
    };
    let ta_ep = take(PartyId::Ta)?;
    let csp_ep = take(PartyId::Csp)?;
    let user_eps = (0..cfg.k() as u32)
        .map(|i| take(PartyId::User(i)))
        .collect::<Result<Vec<_>, _>>()?;

    let (ta, csp, users) = thread::scope(|s| {
        let ta = s.spawn(|| run_ta(cfg, ta_ep));
        let csp = s.spawn(|| run_csp(cfg, csp_ep));
        let users: Vec<_> = user_eps
            .into_iter()
            .enumerate()
            .map(|(i, ep)| {
                let input = UserInput {
                    index: i,
                    data: &data[i],
                    label: if cfg.label_holder() == Some(i) { label } else { None },
                };
                s.spawn(move || run_user(cfg, input, ep))
            })
            .collect();
        let ta = join("ta", ta.join());
        let csp = join("csp", csp.join());
        let users: Vec<Result<FedSvdResult, ProtocolError>> = users
            .into_iter()
            .enumerate()
            .map(|(i, h)| join(&format!("user{i}"), h.join()))
            .collect();
        (ta, csp, users)
    });

    let mut errors: Vec<ProtocolError> = Vec::new();
    let ta = ta.map_err(|e| errors.push(e)).ok();
    let csp = csp.map_err(|e| errors.push(e)).ok();
    let users: Vec<Option<FedSvdResult>> = users.into_iter().map(|r| r.map_err(|e| errors.push(e)).ok()).collect();
    if !errors.is_empty() {
        let root = errors
            .iter()
            .position(|e| !is_secondary(e))
            .unwrap_or(0);
        return Err(errors.swap_remove(root));
    }
    Ok(SessionOutcome {
        ta: ta.expect("no errors"),
        csp: csp.expect("no errors"),
        users: users.into_iter().map(|u| u.expect("no errors")).collect(),
    })
}

fn join<T>(name: &str, r: thread::Result<Result<T, ProtocolError>>) -> Result<T, ProtocolError> {
    r.unwrap_or_else(|_| Err(ProtocolError::RoleFailed(name.into())))
}

/// Errors that only echo another role's failure.
fn is_secondary(e: &ProtocolError) -> bool {
    matches!(
        e,
        ProtocolError::Aborted { .. } | ProtocolError::Transport(TransportError::Disconnected(_))
    )
}

/// Connects one role over TCP. The TA and the CSP accept all `k` users on
/// `listener`; a user dials both.
pub fn tcp_role_endpoint(
    me: PartyId,
    k: usize,
    listener: Option<&TcpListener>,
    ta_addr: Option<SocketAddr>,
    csp_addr: Option<SocketAddr>,
    timeout: Duration,
) -> Result<Endpoint, ProtocolError> {
    let mut b = TcpEndpointBuilder::new(me);
    match me {
        PartyId::Ta | PartyId::Csp => {
            let l = listener.ok_or_else(|| ProtocolError::Config(format!("{me} needs a listener")))?;
            let mut got = b.accept(l, k, timeout)?;
            got.sort();
            let want: Vec<PartyId> = (0..k as u32).map(PartyId::User).collect();
            if got != want {
                return Err(ProtocolError::Config(format!("{me} expected users 0..{k}, got {got:?}")));
            }
        }
        PartyId::User(_) => {
            let ta = ta_addr.ok_or_else(|| ProtocolError::Config("user needs the TA address".into()))?;
            let csp = csp_addr.ok_or_else(|| ProtocolError::Config("user needs the CSP address".into()))?;
            b.connect(PartyId::Ta, ta, timeout)?;
            b.connect(PartyId::Csp, csp, timeout)?;
        }
    }
    let mut ep = b.build();
    ep.set_timeout(Some(timeout));
    Ok(ep)
}

/// Endpoints for a TA, a CSP and `k` users connected over loopback TCP.
pub fn tcp_loopback_network(k: usize, timeout: Duration) -> Result<BTreeMap<PartyId, Endpoint>, ProtocolError> {
    let io = |e: std::io::Error| ProtocolError::Transport(TransportError::Io(e.to_string()));
    let ta_l = TcpListener::bind("127.0.0.1:0").map_err(io)?;
    let csp_l = TcpListener::bind("127.0.0.1:0").map_err(io)?;
    let ta_addr = ta_l.local_addr().map_err(io)?;
    let csp_addr = csp_l.local_addr().map_err(io)?;
    thread::scope(|s| {
        let ta = s.spawn(|| tcp_role_endpoint(PartyId::Ta, k, Some(&ta_l), None, None, timeout));
        let csp = s.spawn(|| tcp_role_endpoint(PartyId::Csp, k, Some(&csp_l), None, None, timeout));
        let users: Vec<_> = (0..k as u32)
            .map(|i| {
                s.spawn(move || tcp_role_endpoint(PartyId::User(i), k, None, Some(ta_addr), Some(csp_addr), timeout))
            })
            .collect();
        let mut out = BTreeMap::new();
        let failed = || ProtocolError::RoleFailed("tcp setup".into());
        out.insert(PartyId::Ta, ta.join().map_err(|_| failed())??);
        out.insert(PartyId::Csp, csp.join().map_err(|_| failed())??);
        for (i, h) in users.into_iter().enumerate() {
            out.insert(PartyId::User(i as u32), h.join().map_err(|_| failed())??);
        }
        Ok(out)
    })
}
