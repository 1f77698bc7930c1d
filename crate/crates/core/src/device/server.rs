//! Line-oriented JSON protocol over local TCP.
//!
//! Request (one line): `{"function_id": "...", "arguments": {...}}`, with an
//! optional `"op"` of `"invoke"` (default), `"call_log"`, or `"describe"`.
//! Response (one line): `{"status": "ok"|"error", "code": 200|400|404, "value": ...}`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CallRecord, DeviceError, DeviceResponse, VirtualDevice};

pub type SharedDevice = Arc<Mutex<VirtualDevice>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 0 }
    }
}

#[derive(Debug, Deserialize)]
struct Request {
    #[serde(default)]
    op: Option<String>,
    #[serde(default)]
    function_id: Option<String>,
    #[serde(default)]
    arguments: Value,
}

fn handle_line(device: &SharedDevice, line: &str) -> DeviceResponse {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return DeviceResponse::error(400, format!("bad request: {e}")),
    };
    let mut dev = device.lock().unwrap_or_else(|p| p.into_inner());
    match req.op.as_deref().unwrap_or("invoke") {
        "invoke" => match req.function_id {
            Some(id) => {
                let args = if req.arguments.is_null() { json!({}) } else { req.arguments };
                dev.invoke(&id, args)
            }
            None => DeviceResponse::error(400, "missing function_id"),
        },
        "call_log" => DeviceResponse::ok(serde_json::to_value(dev.call_log()).unwrap_or(Value::Null), None),
        "describe" => DeviceResponse::ok(serde_json::to_value(dev.functions()).unwrap_or(Value::Null), None),
        other => DeviceResponse::error(400, format!("unknown op {other}")),
    }
}

fn serve_connection(device: &SharedDevice, stream: TcpStream, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(100)))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => return Ok(()),
            Ok(_) => {
                if buf.last() != Some(&b'\n') {
                    // EOF in the middle of a line: answer what we have
                    let resp = handle_line(device, &String::from_utf8_lossy(&buf));
                    writeln!(writer, "{}", serde_json::to_string(&resp).unwrap_or_default())?;
                    return Ok(());
                }
                let line = String::from_utf8_lossy(&buf).trim().to_string();
                buf.clear();
                if line.is_empty() {
                    continue;
                }
                let resp = handle_line(device, &line);
                writeln!(writer, "{}", serde_json::to_string(&resp).unwrap_or_default())?;
                writer.flush()?;
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if stop.load(Ordering::SeqCst) && buf.is_empty() {
                    return Ok(());
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Handle to a running device server. Dropping it shuts the server down.
pub struct ServerHandle {
    addr: SocketAddr,
    device: SharedDevice,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `host:port` form used by sandbox command templates.
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn device(&self) -> &SharedDevice {
        &self.device
    }

    /// Stops accepting, lets the connection in progress finish its pending
    /// request, and joins the server thread.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Serves `device` on a single-threaded accept loop; requests are handled
/// one at a time in arrival order.
pub fn serve(device: SharedDevice, config: &EndpointConfig) -> Result<ServerHandle, DeviceError> {
    let addr = format!("{}:{}", config.host, config.port);
    let listener = TcpListener::bind(&addr).map_err(|source| DeviceError::Bind { addr: addr.clone(), source })?;
    let local = listener.local_addr().map_err(|source| DeviceError::Bind { addr: addr.clone(), source })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| DeviceError::Bind { addr, source })?;
    let stop = Arc::new(AtomicBool::new(false));
    let thread = {
        let device = device.clone();
        let stop = stop.clone();
        std::thread::Builder::new()
            .name(format!("virtual-device-{}", local.port()))
            .spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            if let Err(e) = serve_connection(&device, stream, &stop) {
                                tracing::debug!(error = %e, "device connection ended with error");
                            }
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(e) => {
                            tracing::warn!(error = %e, "device accept failed");
                            std::thread::sleep(Duration::from_millis(10));
                        }
                    }
                }
            })
            .map_err(|e| DeviceError::Transport(e.to_string()))?
    };
    Ok(ServerHandle { addr: local, device, stop, thread: Some(thread) })
}

/// Minimal protocol client: one connection per request.
#[derive(Debug, Clone)]
pub struct DeviceClient {
    endpoint: String,
    timeout: Duration,
}

impl DeviceClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), timeout: Duration::from_secs(5) }
    }

    pub fn request(&self, body: &Value) -> Result<DeviceResponse, DeviceError> {
        let transport = |e: io::Error| DeviceError::Transport(format!("{}: {e}", self.endpoint));
        let addr: SocketAddr = self
            .endpoint
            .parse()
            .map_err(|e| DeviceError::Transport(format!("bad endpoint {}: {e}", self.endpoint)))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(transport)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(transport)?;
        writeln!(stream, "{body}").map_err(transport)?;
        stream.flush().map_err(transport)?;
        let mut line = String::new();
        BufReader::new(&stream).read_line(&mut line).map_err(transport)?;
        serde_json::from_str(&line).map_err(|e| DeviceError::Transport(format!("bad response {line:?}: {e}")))
    }

    pub fn invoke(&self, function_id: &str, arguments: Value) -> Result<DeviceResponse, DeviceError> {
        self.request(&json!({"function_id": function_id, "arguments": arguments}))
    }

    pub fn call_log(&self) -> Result<Vec<CallRecord>, DeviceError> {
        let resp = self.request(&json!({"op": "call_log"}))?;
        serde_json::from_value(resp.value.unwrap_or(Value::Null)).map_err(|e| DeviceError::Transport(e.to_string()))
    }
}
