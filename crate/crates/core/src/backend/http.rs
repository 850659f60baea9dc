use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use super::protocol::ErrorBody;
use super::{Backend, BackendEndpointSet, BackendError, Endpoint};

/// Counting gate bounding concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Blocking HTTP client for the model service.
pub struct HttpBackend {
    endpoints: BackendEndpointSet,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(endpoints: BackendEndpointSet) -> Result<Self, String> {
        endpoints.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(endpoints.timeout_ms))
            .build()
            .map_err(|e| e.to_string())?;
        let gate = Gate { in_flight: Mutex::new(0), freed: Condvar::new(), limit: endpoints.max_in_flight };
        Ok(HttpBackend { endpoints, client, gate })
    }

    fn url(&self, endpoint: Endpoint) -> String {
        format!("{}{}", self.endpoints.base_url.trim_end_matches('/'), endpoint.path())
    }

    fn attempt(&self, endpoint: Endpoint, request: &Value) -> Result<Value, Attempt> {
        let _permit = self.gate.acquire();
        let resp = self
            .client
            .post(self.url(endpoint))
            .json(request)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&body).map_err(|e| {
                Attempt::Fatal(BackendError::Protocol { endpoint, field: "$".into(), message: e.to_string() })
            });
        }
        if status.is_client_error() {
            let err = match serde_json::from_str::<ErrorBody>(&body) {
                Ok(b) => BackendError::Rejected { endpoint, status: status.as_u16(), field: b.field, message: b.error },
                Err(_) => BackendError::Rejected { endpoint, status: status.as_u16(), field: "$".into(), message: body },
            };
            return Err(Attempt::Fatal(err));
        }
        Err(Attempt::Retry(format!("status {status}")))
    }
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl Backend for HttpBackend {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        let budget = self.endpoints.retry_budget;
        let mut last = String::new();
        for attempt in 1..=budget {
            match self.attempt(endpoint, request) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("{endpoint} attempt {attempt}/{budget} failed: {msg}");
                    last = msg;
                    if attempt < budget {
                        std::thread::sleep(Duration::from_millis(20 * u64::from(attempt)));
                    }
                }
            }
        }
        Err(BackendError::Transport { endpoint, attempts: budget, message: last })
    }
}
