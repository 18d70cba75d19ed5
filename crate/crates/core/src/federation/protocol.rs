use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};

use super::matrix::{LogLikMatrix, PooledDraws};
use super::wire::{encode_body, Endpoint, Frame, FrameHeader, MessageKind};
use crate::error::{Error, Result};
use crate::model::{DrawSource, ModelSpec, ParamDraws, PartLikelihood};

/// Environment variable capping the number of concurrently running workers.
pub const THREADS_ENV: &str = "LEMIE_THREADS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    /// Pooled draws decoded and evaluated per step inside a worker.
    pub chunk_size: usize,
    /// Workers running at the same time.
    pub threads: usize,
    /// Keep full frames in the transcript (for audits; memory heavy).
    pub retain_payloads: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            chunk_size: 4096,
            threads: default_threads(),
            retain_payloads: false,
        }
    }
}

/// Thread count from `LEMIE_THREADS`, else the available parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Envelope of one message. The payload is kept only when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub round: u32,
    pub phase: u16,
    pub kind: MessageKind,
    pub origin: Endpoint,
    pub destination: Endpoint,
    pub dim: u32,
    pub count: u64,
    pub byte_count: u64,
    pub digest: String,
    #[serde(skip)]
    pub frame: Option<Frame>,
}

impl ProtocolMessage {
    fn record(round: u32, frame: &Frame, retain: bool) -> Self {
        let h = frame.header();
        Self {
            round,
            phase: h.phase,
            kind: h.kind,
            origin: h.origin,
            destination: h.destination,
            dim: h.dim,
            count: h.count,
            byte_count: frame.byte_count() as u64,
            digest: frame.digest(),
            frame: retain.then(|| frame.clone()),
        }
    }

    fn worker(&self) -> u32 {
        match (self.origin, self.destination) {
            (Endpoint::Worker(w), _) | (_, Endpoint::Worker(w)) => w,
            _ => u32::MAX,
        }
    }
}

/// Bytes exchanged, split by message kind and protocol round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunicationReport {
    pub messages: usize,
    pub total_bytes: u64,
    pub bytes_by_kind: BTreeMap<String, u64>,
    pub bytes_by_round: Vec<u64>,
}

impl CommunicationReport {
    pub fn from_transcript(transcript: &[ProtocolMessage]) -> Self {
        let mut by_kind = BTreeMap::new();
        let mut by_round: Vec<u64> = Vec::new();
        for m in transcript {
            *by_kind.entry(m.kind.as_str().to_string()).or_insert(0) += m.byte_count;
            let r = m.round as usize;
            if by_round.len() <= r {
                by_round.resize(r + 1, 0);
            }
            by_round[r] += m.byte_count;
        }
        Self {
            messages: transcript.len(),
            total_bytes: transcript.iter().map(|m| m.byte_count).sum(),
            bytes_by_kind: by_kind,
            bytes_by_round: by_round,
        }
    }
}

/// Write one JSON envelope per line; payloads are represented by their digests.
pub fn write_transcript_jsonl<W: Write>(transcript: &[ProtocolMessage], mut out: W) -> Result<()> {
    for m in transcript {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Everything the master holds after the protocol.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub pooled: PooledDraws,
    pub loglik: LogLikMatrix,
    pub transcript: Vec<ProtocolMessage>,
    rounds: u32,
}

impl ProtocolRun {
    pub fn communication(&self) -> CommunicationReport {
        CommunicationReport::from_transcript(&self.transcript)
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }
}

/// Run `work` for every worker on at most `threads` threads and hand each result
/// to `consume` on the calling thread as it arrives.
fn run_workers<T, W, C>(m: usize, threads: usize, work: W, mut consume: C) -> Result<()>
where
    T: Send,
    W: Fn(usize) -> Result<T> + Sync,
    C: FnMut(usize, T) -> Result<()>,
{
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<T>)>();
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, m.max(1)) {
            let tx = tx.clone();
            let next = &next;
            let work = &work;
            scope.spawn(move || loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= m {
                    break;
                }
                let failed = {
                    let r = work(j);
                    let failed = r.is_err();
                    if tx.send((j, r)).is_err() {
                        break;
                    }
                    failed
                };
                if failed {
                    // Let the remaining workers drain quickly.
                    next.store(m, Ordering::Relaxed);
                    break;
                }
            });
        }
        drop(tx);
        let mut first_err = None;
        for (j, r) in rx {
            match r {
                Ok(v) if first_err.is_none() => {
                    if let Err(e) = consume(j, v) {
                        first_err = Some(e);
                        next.store(m, Ordering::Relaxed);
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    if first_err.is_none() {
                        first_err = Some(e);
                    }
                }
            }
        }
        first_err.map_or(Ok(()), Err)
    })
}

/// Worker side of `logliks_in`: decode the broadcast in chunks and evaluate.
fn evaluate_frame(
    part: &dyn PartLikelihood,
    worker: usize,
    frame: &Frame,
    chunk_size: usize,
    phase: u16,
) -> Result<Frame> {
    let h = frame.header();
    let dim = h.dim as usize;
    if dim != part.dim() {
        return Err(Error::Protocol(format!(
            "worker {worker} received draws of dimension {dim} but its model has {}",
            part.dim()
        )));
    }
    let n = h.count as usize;
    let chunk = chunk_size.max(1);
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(chunk * dim);
    let mut start = 0;
    while start < n {
        let len = chunk.min(n - start);
        frame.values_into(start * dim, len * dim, &mut buf);
        for theta in buf.chunks_exact(dim) {
            let v = part.log_lik(theta);
            if v.is_nan() {
                return Err(Error::ContractViolation(format!(
                    "worker {worker} returned a NaN log-likelihood for pooled draw {}",
                    out.len()
                )));
            }
            out.push(v);
        }
        start += len;
    }
    Frame::from_values(
        FrameHeader {
            kind: MessageKind::LogliksIn,
            phase,
            origin: Endpoint::Worker(worker as u32),
            destination: Endpoint::Master,
            dim: 1,
            count: n as u64,
        },
        &out,
    )
}

/// Master plus one worker per model part.
#[derive(Debug, Clone)]
pub struct Federation {
    model: ModelSpec,
    options: ProtocolOptions,
}

impl Federation {
    pub fn new(model: ModelSpec, options: ProtocolOptions) -> Self {
        Self { model, options }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn options(&self) -> &ProtocolOptions {
        &self.options
    }

    /// Broadcast `draws` and collect one log-likelihood row per worker.
    fn scatter_gather(
        &self,
        round: u32,
        phase: u16,
        draws: &ParamDraws,
        transcript: &mut Vec<ProtocolMessage>,
    ) -> Result<Vec<Vec<f64>>> {
        let m = self.model.num_parts();
        let body = Arc::new(encode_body(draws.values()));
        let mut outgoing = Vec::with_capacity(m);
        for j in 0..m {
            let frame = Frame::new(
                FrameHeader {
                    kind: MessageKind::PooledOut,
                    phase,
                    origin: Endpoint::Master,
                    destination: Endpoint::Worker(j as u32),
                    dim: draws.dim() as u32,
                    count: draws.len() as u64,
                },
                body.clone(),
            )?;
            transcript.push(ProtocolMessage::record(round, &frame, self.options.retain_payloads));
            outgoing.push(frame);
        }
        let parts = self.model.parts();
        let chunk = self.options.chunk_size;
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; m];
        let mut incoming = Vec::with_capacity(m);
        run_workers(
            m,
            self.options.threads,
            |j| evaluate_frame(parts[j].as_ref(), j, &outgoing[j], chunk, phase + 1),
            |j, frame| {
                let h = frame.header();
                if h.count as usize != draws.len() || h.dim != 1 || h.origin != Endpoint::Worker(j as u32) {
                    return Err(Error::Protocol(format!("malformed log-likelihood message from worker {j}")));
                }
                rows[j] = Some(frame.values());
                incoming.push(ProtocolMessage::record(round, &frame, self.options.retain_payloads));
                Ok(())
            },
        )?;
        incoming.sort_by_key(|msg| msg.worker());
        transcript.extend(incoming);
        Ok(rows.into_iter().map(|r| r.expect("every worker replied")).collect())
    }

    /// Run the three-phase protocol on the workers' local draws (in part order).
    pub fn run_in_out_in(&self, local: &[ParamDraws]) -> Result<ProtocolRun> {
        let m = self.model.num_parts();
        let d = self.model.dim();
        if local.len() != m {
            return Err(Error::Protocol(format!(
                "{} draw sets supplied for {m} workers",
                local.len()
            )));
        }
        if let Some((j, s)) = local.iter().enumerate().find(|(_, s)| s.dim() != d) {
            return Err(Error::Protocol(format!(
                "worker {j} holds draws of dimension {} but the model has {d}",
                s.dim()
            )));
        }
        let retain = self.options.retain_payloads;
        let mut transcript = Vec::with_capacity(3 * m);

        // samples_in
        let mut received: Vec<Option<ParamDraws>> = vec![None; m];
        let mut incoming = Vec::with_capacity(m);
        run_workers(
            m,
            self.options.threads,
            |j| {
                Frame::from_values(
                    FrameHeader {
                        kind: MessageKind::SamplesIn,
                        phase: 0,
                        origin: Endpoint::Worker(j as u32),
                        destination: Endpoint::Master,
                        dim: d as u32,
                        count: local[j].len() as u64,
                    },
                    local[j].values(),
                )
            },
            |j, frame| {
                let h = frame.header();
                if h.dim as usize != d {
                    return Err(Error::Protocol(format!("worker {j} sent draws of the wrong dimension")));
                }
                received[j] = Some(ParamDraws::new(d, frame.values(), DrawSource::Local(j))?);
                incoming.push(ProtocolMessage::record(0, &frame, retain));
                Ok(())
            },
        )?;
        incoming.sort_by_key(|msg| msg.worker());
        transcript.extend(incoming);
        let received: Vec<ParamDraws> = received.into_iter().map(|r| r.expect("every worker sent draws")).collect();
        let refs: Vec<&ParamDraws> = received.iter().collect();
        let pooled = PooledDraws::from_blocks(&refs)?;
        drop(received);

        // pooled_out and logliks_in
        let rows = self.scatter_gather(0, 1, pooled.draws(), &mut transcript)?;
        let loglik = LogLikMatrix::from_rows(rows, pooled.column_sources())?;
        Ok(ProtocolRun {
            pooled,
            loglik,
            transcript,
            rounds: 1,
        })
    }

    /// Extra round: broadcast draws created at the master (e.g. from Laplace
    /// approximations) and append their log-likelihood columns.
    pub fn extend_with_proposal_draws(&self, run: &mut ProtocolRun, extra: &[ParamDraws]) -> Result<()> {
        if extra.is_empty() {
            return Ok(());
        }
        let d = self.model.dim();
        if extra.iter().any(|e| e.dim() != d) {
            return Err(Error::Protocol("extra draws have the wrong dimension".into()));
        }
        let refs: Vec<&ParamDraws> = extra.iter().collect();
        let joined = ParamDraws::concat(&refs, DrawSource::Pooled)?;
        let round = run.rounds;
        let phase = (1 + 2 * round) as u16;
        let rows = self.scatter_gather(round, phase, &joined, &mut run.transcript)?;
        let mut sources = Vec::with_capacity(joined.len());
        for e in extra {
            sources.extend(std::iter::repeat_n(e.source(), e.len()));
        }
        run.loglik.append_columns(rows, sources)?;
        run.pooled.append(extra)?;
        run.rounds += 1;
        Ok(())
    }
}

/// Convenience wrapper around [`Federation::run_in_out_in`].
pub fn run_in_out_in(model: &ModelSpec, local: &[ParamDraws], options: ProtocolOptions) -> Result<ProtocolRun> {
    Federation::new(model.clone(), options).run_in_out_in(local)
}
