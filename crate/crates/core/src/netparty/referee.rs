//! Referee service.
//!
//! One reader thread per connection decodes frames and forwards them over a
//! channel; all session state lives with the single consumer of that channel.
//! A session pairs one Alice and one Bob connection by session id, simulates
//! detection block by block as soon as both parties' bits for a block are in,
//! and after the last pulse sends the ruling to both and closes them. Nothing
//! is written to a party before that.

use std::collections::HashMap;
use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{
    encode_verdict, read_frame, session_hex, AbortCode, FingerprintFrame, ReadError, Role, VerdictMessage,
    VerdictStatus, VERDICT_LEN,
};
use crate::bits::BitString;
use crate::codec::Seed;
use crate::decision::Outcome;
use crate::planner::ProtocolPlan;
use crate::simulator::{Physics, PulseEngine, TrialResult, Window, BLOCK_PULSES};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionError {
    #[error("second {0} connection for the session")]
    RoleCollision(Role),
    #[error("{role} sent chunk {got}, expected {expected}")]
    IndexGap { role: Role, expected: u64, got: u64 },
    #[error("{role} announced m = {announced}, plan has m = {expected}")]
    MMismatch { role: Role, announced: u64, expected: u64 },
    #[error("{0} disconnected before sending all bits")]
    Disconnected(Role),
    #[error("{role} sent more than m = {m_total} bits")]
    Overflow { role: Role, m_total: u64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("no progress for {0:?}")]
    Timeout(Duration),
}

impl SessionError {
    pub fn code(&self) -> AbortCode {
        match self {
            SessionError::RoleCollision(_) => AbortCode::RoleCollision,
            SessionError::IndexGap { .. } => AbortCode::IndexGap,
            SessionError::MMismatch { .. } => AbortCode::MMismatch,
            SessionError::Disconnected(_) => AbortCode::Disconnected,
            SessionError::Overflow { .. } => AbortCode::Overflow,
            SessionError::Protocol(_) => AbortCode::Protocol,
            SessionError::Timeout(_) => AbortCode::Timeout,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefereeConfig {
    pub plan: ProtocolPlan<f64>,
    /// Physics seed; each session uses `seed.mix(session_id)`.
    pub seed: Seed,
    /// Stop after this many sessions have ended.
    pub max_sessions: Option<usize>,
    /// Abort sessions that receive nothing for this long.
    pub session_timeout: Option<Duration>,
    pub dark_triggers_dead_time: bool,
}

impl RefereeConfig {
    pub fn new(plan: ProtocolPlan<f64>, seed: Seed) -> Self {
        Self { plan, seed, max_sessions: None, session_timeout: None, dark_triggers_dead_time: true }
    }
}

/// Traffic received from one party in one session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAccount {
    pub peer: Option<String>,
    pub frames: u64,
    pub bytes: u64,
    pub payload_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    /// `equal`, `different` or `aborted`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<SessionError>,
    pub m: u64,
    pub threshold: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TrialResult>,
    pub alice: RoleAccount,
    pub bob: RoleAccount,
    /// Bytes written to either party before the ruling.
    pub bytes_to_parties_before_verdict: u64,
    pub verdict_bytes: u64,
    /// Bytes written to the parties other than verdicts; anything relayed
    /// from one party to the other would land here.
    pub relayed_bytes: u64,
    /// Quantum information bound and classical baseline of the plan, bits.
    pub q_bits: f64,
    pub c_bits: f64,
}

impl SessionReport {
    pub fn outcome(&self) -> Option<Outcome> {
        self.result.map(|r| r.verdict)
    }
}

type ConnId = u64;

enum Event {
    Connected { conn: ConnId, writer: TcpStream, peer: SocketAddr },
    Frame { conn: ConnId, frame: FingerprintFrame },
    Closed { conn: ConnId, error: Option<String> },
}

struct Conn {
    writer: TcpStream,
    peer: SocketAddr,
    bound: Option<([u8; 16], Role)>,
    done: bool,
    /// Bytes written to this party so far.
    written: u64,
}

struct RoleState {
    conn: Option<ConnId>,
    account: RoleAccount,
    next_index: u64,
    pending: BitString,
    pending_off: usize,
}

impl RoleState {
    fn new() -> Self {
        Self {
            conn: None,
            account: RoleAccount::default(),
            next_index: 0,
            pending: BitString::zeros(0),
            pending_off: 0,
        }
    }

    /// Removes and returns the next `count` buffered bits.
    fn take(&mut self, count: usize) -> BitString {
        let mut out = BitString::zeros(0);
        let mut off = 0;
        while off < count {
            let c = (count - off).min(64);
            out.push_word(self.pending.extract_word(self.pending_off + off, c), c);
            off += c;
        }
        self.pending_off += count;
        if self.pending_off >= 1 << 16 && self.pending_off * 2 >= self.pending.len() {
            let rest = self.pending.len() - self.pending_off;
            let mut fresh = BitString::zeros(0);
            let mut off = 0;
            while off < rest {
                let c = (rest - off).min(64);
                fresh.push_word(self.pending.extract_word(self.pending_off + off, c), c);
                off += c;
            }
            self.pending = fresh;
            self.pending_off = 0;
        }
        out
    }
}

struct Session {
    id: [u8; 16],
    roles: [RoleState; 2],
    engine: PulseEngine,
    processed: u64,
    last_activity: Instant,
    extra_conns: Vec<ConnId>,
}

pub struct Referee {
    listener: TcpListener,
    config: RefereeConfig,
}

impl Referee {
    pub fn bind(addr: &str, config: RefereeConfig) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, config })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves sessions until `max_sessions` have ended (forever without a
    /// limit), calling `on_report` as each one ends.
    pub fn run(self, mut on_report: impl FnMut(&SessionReport)) -> io::Result<Vec<SessionReport>> {
        let addr = self.listener.local_addr()?;
        let (tx, rx) = mpsc::channel::<Event>();
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let stop = stop.clone();
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, tx, stop))
        };
        let mut state = State::new(self.config);
        let mut reports = Vec::new();
        let tick = Duration::from_millis(200);
        loop {
            if state.config.max_sessions.is_some_and(|n| reports.len() >= n) {
                break;
            }
            match rx.recv_timeout(tick) {
                Ok(ev) => state.handle(ev),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            state.expire();
            for r in state.finished.drain(..) {
                on_report(&r);
                reports.push(r);
            }
        }
        stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(addr);
        let _ = acceptor.join();
        for c in state.conns.values() {
            let _ = c.writer.shutdown(Shutdown::Both);
        }
        Ok(reports)
    }
}

/// Binds `listen` and serves sessions under `config`.
pub fn run_referee(
    listen: &str,
    config: RefereeConfig,
    on_report: impl FnMut(&SessionReport),
) -> io::Result<Vec<SessionReport>> {
    Referee::bind(listen, config)?.run(on_report)
}

fn accept_loop(listener: TcpListener, tx: mpsc::Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next: ConnId = 0;
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let Ok(peer) = stream.peer_addr() else { continue };
        let Ok(writer) = stream.try_clone() else { continue };
        let _ = stream.set_nodelay(true);
        let conn = next;
        next += 1;
        if tx.send(Event::Connected { conn, writer, peer }).is_err() {
            break;
        }
        let tx = tx.clone();
        thread::spawn(move || {
            let mut r = io::BufReader::with_capacity(1 << 16, stream);
            loop {
                match read_frame(&mut r) {
                    Ok(Some(frame)) => {
                        if tx.send(Event::Frame { conn, frame }).is_err() {
                            return;
                        }
                    }
                    Ok(None) => {
                        let _ = tx.send(Event::Closed { conn, error: None });
                        return;
                    }
                    Err(ReadError::Frame(e)) => {
                        let _ = tx.send(Event::Closed { conn, error: Some(e.to_string()) });
                        return;
                    }
                    Err(ReadError::Io(e)) => {
                        let _ = tx.send(Event::Closed { conn, error: Some(e.to_string()) });
                        return;
                    }
                }
            }
        });
    }
}

struct State {
    config: RefereeConfig,
    conns: HashMap<ConnId, Conn>,
    sessions: HashMap<[u8; 16], Session>,
    finished: Vec<SessionReport>,
}

impl State {
    fn new(config: RefereeConfig) -> Self {
        Self { config, conns: HashMap::new(), sessions: HashMap::new(), finished: Vec::new() }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Connected { conn, writer, peer } => {
                self.conns.insert(conn, Conn { writer, peer, bound: None, done: false, written: 0 });
            }
            Event::Frame { conn, frame } => self.on_frame(conn, frame),
            Event::Closed { conn, error } => self.on_closed(conn, error),
        }
    }

    fn new_session(&self, id: [u8; 16]) -> Session {
        let physics = Physics {
            dark_triggers_dead_time: self.config.dark_triggers_dead_time,
            ..Physics::from_plan(&self.config.plan)
        };
        let engine = PulseEngine::new(physics, self.config.seed.mix(&id)).expect("plan physics validated");
        Session {
            id,
            roles: [RoleState::new(), RoleState::new()],
            engine,
            processed: 0,
            last_activity: Instant::now(),
            extra_conns: Vec::new(),
        }
    }

    fn on_frame(&mut self, conn: ConnId, frame: FingerprintFrame) {
        let Some(c) = self.conns.get_mut(&conn) else { return };
        if c.done {
            return;
        }
        let sid = frame.session_id;
        let role = frame.role;
        let peer = c.peer.to_string();
        match c.bound {
            Some((s, r)) if s != sid || r != role => {
                // a connection carries exactly one role of one session
                let bound_sid = s;
                self.abort(bound_sid, SessionError::Protocol("frame for another session or role".into()));
                return;
            }
            Some(_) => {}
            None => {
                c.bound = Some((sid, role));
                if !self.sessions.contains_key(&sid) {
                    let s = self.new_session(sid);
                    self.sessions.insert(sid, s);
                }
                let s = self.sessions.get_mut(&sid).unwrap();
                let slot = &mut s.roles[role.index()];
                if slot.conn.is_some() {
                    s.extra_conns.push(conn);
                    self.abort(sid, SessionError::RoleCollision(role));
                    return;
                }
                slot.conn = Some(conn);
                slot.account.peer = Some(peer);
            }
        }
        let m = self.config.plan.m;
        let s = self.sessions.get_mut(&sid).expect("bound session exists");
        s.last_activity = Instant::now();
        let slot = &mut s.roles[role.index()];
        slot.account.frames += 1;
        slot.account.bytes += frame.encoded_len() as u64;
        let err = if frame.m_total != m {
            Some(SessionError::MMismatch { role, announced: frame.m_total, expected: m })
        } else if frame.chunk_index != slot.next_index {
            Some(SessionError::IndexGap { role, expected: slot.next_index, got: frame.chunk_index })
        } else if slot.account.payload_bits + u64::from(frame.chunk_bits) > frame.m_total {
            Some(SessionError::Overflow { role, m_total: frame.m_total })
        } else {
            None
        };
        if let Some(e) = err {
            self.abort(sid, e);
            return;
        }
        slot.next_index += 1;
        slot.account.payload_bits += u64::from(frame.chunk_bits);
        slot.pending.extend_from_packed(&frame.payload, frame.chunk_bits as usize);
        self.advance(sid);
    }

    /// Simulates every block both parties have fully delivered.
    fn advance(&mut self, sid: [u8; 16]) {
        let m = self.config.plan.m;
        let s = self.sessions.get_mut(&sid).unwrap();
        loop {
            let end = (s.processed + BLOCK_PULSES).min(m);
            if s.processed >= m || s.roles[0].account.payload_bits < end || s.roles[1].account.payload_bits < end {
                break;
            }
            let len = (end - s.processed) as usize;
            let a = s.roles[0].take(len);
            let b = s.roles[1].take(len);
            let diff = a.xor(&b);
            let block = s.processed / BLOCK_PULSES;
            let clicks = s.engine.propose_block(block, &Window { start: s.processed, bits: &diff });
            s.engine.absorb(&clicks);
            s.processed = end;
        }
        if s.processed == m {
            self.complete(sid);
        }
    }

    fn written_to(&self, conns: &[ConnId]) -> u64 {
        conns.iter().filter_map(|id| self.conns.get(id)).map(|c| c.written).sum()
    }

    /// Sends `v` on every open connection of the session and closes them.
    /// Returns the bytes written before the verdict, the verdict bytes, and
    /// everything else written.
    fn send_verdict(&mut self, conns: &[ConnId], v: &VerdictMessage) -> (u64, u64, u64) {
        let before = self.written_to(conns);
        let bytes = encode_verdict(v);
        let mut sent = 0;
        for id in conns {
            if let Some(c) = self.conns.get_mut(id) {
                if !c.done {
                    if c.writer.write_all(&bytes).is_ok() {
                        sent += VERDICT_LEN as u64;
                        c.written += VERDICT_LEN as u64;
                    }
                    let _ = c.writer.shutdown(Shutdown::Both);
                    c.done = true;
                }
            }
        }
        let other = self.written_to(conns) - before - sent;
        (before, sent, other + before)
    }

    fn session_conns(s: &Session) -> Vec<ConnId> {
        s.roles.iter().filter_map(|r| r.conn).chain(s.extra_conns.iter().copied()).collect()
    }

    fn complete(&mut self, sid: [u8; 16]) {
        let s = self.sessions.remove(&sid).unwrap();
        let conns = Self::session_conns(&s);
        let plan = self.config.plan.clone();
        let (result, _) = s.engine.finish(plan.threshold);
        let v = VerdictMessage {
            session_id: sid,
            status: VerdictStatus::Ruled(result.verdict),
            clicks_d0: result.clicks_d0,
            clicks_d1: result.clicks_d1,
            threshold: plan.threshold,
        };
        let (before, verdict_bytes, relayed_bytes) = self.send_verdict(&conns, &v);
        let [a, b] = s.roles;
        self.finished.push(SessionReport {
            session_id: session_hex(&sid),
            status: match result.verdict {
                Outcome::Equal => "equal".into(),
                Outcome::Different => "different".into(),
            },
            error: None,
            m: plan.m,
            threshold: plan.threshold,
            result: Some(result),
            alice: a.account,
            bob: b.account,
            bytes_to_parties_before_verdict: before,
            verdict_bytes,
            relayed_bytes,
            q_bits: plan.account.q,
            c_bits: plan.account.c,
        });
    }

    fn abort(&mut self, sid: [u8; 16], error: SessionError) {
        let Some(s) = self.sessions.remove(&sid) else { return };
        let conns = Self::session_conns(&s);
        let plan = self.config.plan.clone();
        let v = VerdictMessage {
            session_id: sid,
            status: VerdictStatus::Aborted(error.code()),
            clicks_d0: 0,
            clicks_d1: 0,
            threshold: plan.threshold,
        };
        let (before, verdict_bytes, relayed_bytes) = self.send_verdict(&conns, &v);
        let [a, b] = s.roles;
        self.finished.push(SessionReport {
            session_id: session_hex(&sid),
            status: "aborted".into(),
            error: Some(error),
            m: plan.m,
            threshold: plan.threshold,
            result: None,
            alice: a.account,
            bob: b.account,
            bytes_to_parties_before_verdict: before,
            verdict_bytes,
            relayed_bytes,
            q_bits: plan.account.q,
            c_bits: plan.account.c,
        });
    }

    fn on_closed(&mut self, conn: ConnId, error: Option<String>) {
        // a malformed frame still gets the abort verdict, so drop the
        // connection only after handling it
        self.close_session_of(conn, error);
        self.conns.remove(&conn);
    }

    fn close_session_of(&mut self, conn: ConnId, error: Option<String>) {
        let Some(c) = self.conns.get(&conn) else { return };
        if c.done {
            return;
        }
        let Some((sid, role)) = c.bound else { return };
        let m = self.config.plan.m;
        let Some(s) = self.sessions.get(&sid) else { return };
        if s.roles[role.index()].conn != Some(conn) {
            return;
        }
        if let Some(e) = error {
            self.abort(sid, SessionError::Protocol(e));
        } else if s.roles[role.index()].account.payload_bits < m {
            self.abort(sid, SessionError::Disconnected(role));
        }
    }

    fn expire(&mut self) {
        let Some(limit) = self.config.session_timeout else { return };
        let stale: Vec<_> =
            self.sessions.values().filter(|s| s.last_activity.elapsed() > limit).map(|s| s.id).collect();
        for sid in stale {
            self.abort(sid, SessionError::Timeout(limit));
        }
    }
}
