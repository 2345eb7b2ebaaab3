//! Client side of the wire protocol: a backend living in another process.

use std::fmt;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use super::{Capabilities, Denoiser, StepContext};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;
use crate::view::ViewCondition;
use crate::wire::{read_response, write_request, DenoiseRequest, Request, Response};

/// Where the service lives: `tcp://host:port` or `stdio:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Stdio(Vec<String>),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() || !addr.contains(':') {
                return Err(Error::Config(format!("endpoint {s:?} needs host:port")));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("stdio:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::Config(format!("endpoint {s:?} has no command")));
            }
            Ok(Endpoint::Stdio(argv))
        } else {
            Err(Error::Config(format!("endpoint {s:?} must start with tcp:// or stdio:")))
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "tcp://{a}"),
            Endpoint::Stdio(argv) => write!(f, "stdio:{}", argv.join(" ")),
        }
    }
}

enum Connection {
    Tcp {
        reader: BufReader<TcpStream>,
        writer: BufWriter<TcpStream>,
    },
    Stdio {
        child: Child,
        reader: BufReader<ChildStdout>,
        writer: Option<BufWriter<ChildStdin>>,
    },
}

impl Connection {
    fn open(endpoint: &Endpoint) -> Result<Self> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::backend(format!("cannot connect to {addr}: {e}")))?;
                stream.set_nodelay(true)?;
                Ok(Connection::Tcp {
                    reader: BufReader::new(stream.try_clone()?),
                    writer: BufWriter::new(stream),
                })
            }
            Endpoint::Stdio(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::backend(format!("cannot start {:?}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Connection::Stdio {
                    child,
                    reader: BufReader::new(stdout),
                    writer: Some(BufWriter::new(stdin)),
                })
            }
        }
    }

    fn call(&mut self, req: &Request) -> Result<Response> {
        let io = |e: Error| match e {
            Error::Io(e) => Error::backend(format!("transport: {e}")),
            other => other,
        };
        match self {
            Connection::Tcp { reader, writer } => {
                write_request(writer, req).and_then(|_| Ok(writer.flush()?)).map_err(io)?;
                read_response(reader).map_err(io)
            }
            Connection::Stdio { reader, writer, .. } => {
                let writer = writer.as_mut().ok_or_else(|| Error::backend("service stdin closed"))?;
                write_request(writer, req).and_then(|_| Ok(writer.flush()?)).map_err(io)?;
                read_response(reader).map_err(io)
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Connection::Stdio { child, writer, .. } = self {
            // closes the service's stdin before it is reaped
            drop(writer.take());
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Backend served over the wire protocol. One connection carries one request
/// at a time, so the advertised concurrency is capped at 1.
pub struct ExternalDenoiser {
    endpoint: Endpoint,
    capabilities: Capabilities,
    conn: Mutex<Connection>,
}

impl fmt::Debug for ExternalDenoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalDenoiser")
            .field("endpoint", &self.endpoint)
            .field("capabilities", &self.capabilities)
            .finish()
    }
}

impl ExternalDenoiser {
    /// Connect and fetch the service's capability descriptor.
    pub fn connect(endpoint: Endpoint) -> Result<Self> {
        let mut conn = Connection::open(&endpoint)?;
        let mut capabilities = match conn.call(&Request::Capabilities)? {
            Response::Capabilities(c) => c,
            Response::Error(m) => return Err(Error::backend(format!("capabilities refused: {m}"))),
            Response::Epsilon(_) => return Err(Error::backend("capabilities answered with a tensor")),
        };
        capabilities.max_concurrency = Some(1);
        Ok(Self {
            endpoint,
            capabilities,
            conn: Mutex::new(conn),
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }
}

impl Denoiser for ExternalDenoiser {
    fn capabilities(&self) -> Capabilities {
        self.capabilities.clone()
    }

    fn predict_epsilon(&self, x_t: &LatentTensor, step: &StepContext, cond: &ViewCondition) -> Result<LatentTensor> {
        let req = Request::Denoise(DenoiseRequest {
            t: step.t,
            total: step.total,
            alpha_bar: step.alpha_bar,
            global_caption: cond.full_text.clone(),
            segments: cond
                .dense_pairs
                .iter()
                .map(|p| (p.caption.clone(), p.mask.clone()))
                .collect(),
            keypoint_map: cond.keypoint_map.clone(),
            x_t: x_t.clone(),
        });
        let mut conn = self.conn.lock().map_err(|_| Error::backend("connection poisoned"))?;
        match conn.call(&req)? {
            Response::Epsilon(eps) => Ok(eps),
            Response::Error(m) => Err(Error::backend(m)),
            Response::Capabilities(_) => Err(Error::backend("denoise answered with capabilities")),
        }
    }
}
