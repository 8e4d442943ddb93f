//! The judge exchange over the swarm socket framing (demo mode).

use std::cell::RefCell;
use std::io::{BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Contestant, Judge, Timeout};
use crate::error::{Error, Result};
use crate::swarmnet::{read_frame, write_frame};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Message {
    Request { node_id: String, completed_rounds: u64 },
    Question { prompt: String },
    Answer { text: String },
    Verdict { score: Option<f64> },
}

fn send(stream: &mut TcpStream, m: &Message) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(m).expect("message serializes");
    line.push(b'\n');
    write_frame(stream, &line)?;
    stream.flush()
}

fn recv(reader: &mut BufReader<TcpStream>) -> Result<Message> {
    let frame = read_frame(reader)?.ok_or_else(|| Error::Transport("connection closed".into()))?;
    Ok(serde_json::from_slice(&frame)?)
}

struct RemoteContestant {
    node_id: String,
    completed_rounds: u64,
    io: RefCell<(BufReader<TcpStream>, TcpStream)>,
}

impl Contestant for RemoteContestant {
    fn node_id(&self) -> String {
        self.node_id.clone()
    }

    fn completed_rounds(&self) -> u64 {
        self.completed_rounds
    }

    fn answer(&self, prompt: &str) -> std::result::Result<String, Timeout> {
        let mut io = self.io.borrow_mut();
        let (reader, writer) = &mut *io;
        send(writer, &Message::Question { prompt: prompt.to_string() }).map_err(|_| Timeout)?;
        match recv(reader) {
            Ok(Message::Answer { text }) => Ok(text),
            _ => Err(Timeout),
        }
    }
}

fn serve(stream: TcpStream, judge: &Judge, timeout: Duration) -> Result<()> {
    stream.set_read_timeout(Some(timeout))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    while let Ok(Message::Request {
        node_id,
        completed_rounds,
    }) = recv(&mut reader)
    {
        let contestant = RemoteContestant {
            node_id,
            completed_rounds,
            io: RefCell::new((reader, stream.try_clone()?)),
        };
        let score = judge.evaluate(&contestant).map(|r| r.score);
        let (r, mut w) = contestant.io.into_inner();
        reader = r;
        send(&mut w, &Message::Verdict { score })?;
    }
    Ok(())
}

pub struct JudgeServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl JudgeServer {
    /// Serves `judge` on `addr`; `timeout` bounds how long a node may take to answer.
    pub fn spawn(addr: SocketAddr, judge: Arc<Judge>, timeout: Duration) -> Result<JudgeServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let judge = Arc::clone(&judge);
                    std::thread::spawn(move || {
                        if let Err(e) = serve(stream, &judge, timeout) {
                            tracing::debug!("judge connection ended: {e}");
                        }
                    });
                }
            })
        };
        Ok(JudgeServer {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for JudgeServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Node side of one remote evaluation. `Ok(None)` means the judge recorded a timeout.
pub fn request_evaluation(addr: SocketAddr, node: &dyn Contestant, timeout: Duration) -> Result<Option<f64>> {
    let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    send(
        &mut stream,
        &Message::Request {
            node_id: node.node_id(),
            completed_rounds: node.completed_rounds(),
        },
    )?;
    let prompt = match recv(&mut reader)? {
        Message::Question { prompt } => prompt,
        other => return Err(Error::Transport(format!("expected a question, got {other:?}"))),
    };
    let text = node
        .answer(&prompt)
        .map_err(|_| Error::Transport("contestant could not answer".into()))?;
    send(&mut stream, &Message::Answer { text })?;
    match recv(&mut reader)? {
        Message::Verdict { score } => Ok(score),
        other => Err(Error::Transport(format!("expected a verdict, got {other:?}"))),
    }
}
