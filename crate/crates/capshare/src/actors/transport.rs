//! How actors reach the capsule store: directly against a shared [`Store`],
//! or over HTTP against a running server. Both speak the same operations and
//! surface the same [`StoreError`] values, which is what makes in-process and
//! over-the-wire scenario runs comparable.

use std::sync::Arc;

use crate::csstore::http::encode_dci;
use crate::csstore::{Store, StoreError};
use crate::envelope;
use crate::scheme::{CapsuleId, DataCapsule, DownloadParameter, DownloadToken, RevocationToken};

pub trait CapsuleTransport: Sync {
    fn put_capsule(&self, id: &CapsuleId, dc: &DataCapsule) -> Result<(), StoreError>;
    fn fetch_capsule(&self, dci: &CapsuleId) -> Result<(CapsuleId, DataCapsule), StoreError>;
    fn register_tokens(
        &self,
        dci: &CapsuleId,
        revocation: &RevocationToken,
        token: &DownloadToken,
    ) -> Result<(), StoreError>;
    fn download(
        &self,
        dci: &CapsuleId,
        param: &DownloadParameter,
    ) -> Result<(CapsuleId, DataCapsule), StoreError>;
    /// Expire overdue tokens; returns how many were resolved.
    fn sweep(&self) -> Result<u64, StoreError>;
    /// Move the store's manual clock (test installations only).
    fn set_clock(&self, now: u64) -> Result<(), StoreError>;
}

/// Direct calls into a shared store instance.
pub struct InProcessTransport {
    store: Arc<Store>,
}

impl InProcessTransport {
    pub fn new(store: Arc<Store>) -> Self {
        InProcessTransport { store }
    }
}

impl CapsuleTransport for InProcessTransport {
    fn put_capsule(&self, id: &CapsuleId, dc: &DataCapsule) -> Result<(), StoreError> {
        self.store.store_capsule(id, dc)
    }

    fn fetch_capsule(&self, dci: &CapsuleId) -> Result<(CapsuleId, DataCapsule), StoreError> {
        self.store.get_capsule(dci).ok_or(StoreError::UnknownCapsule)
    }

    fn register_tokens(
        &self,
        dci: &CapsuleId,
        revocation: &RevocationToken,
        token: &DownloadToken,
    ) -> Result<(), StoreError> {
        self.store.register_tokens(dci, revocation, token)
    }

    fn download(
        &self,
        dci: &CapsuleId,
        param: &DownloadParameter,
    ) -> Result<(CapsuleId, DataCapsule), StoreError> {
        self.store.handle_download(dci, param)
    }

    fn sweep(&self) -> Result<u64, StoreError> {
        let now = self.store.clock().now();
        self.store.expire_sweep(now)
    }

    fn set_clock(&self, now: u64) -> Result<(), StoreError> {
        if self.store.clock().set(now) {
            Ok(())
        } else {
            Err(StoreError::Transport(
                "store runs on the system clock".into(),
            ))
        }
    }
}

/// Blocking HTTP client for a served store.
pub struct HttpTransport {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpTransport {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }

    /// Turns a non-2xx response into the store error its body names.
    fn read_error(status: u16, body: &str) -> StoreError {
        match body.split_once('\n') {
            Some((code, msg)) => StoreError::from_code(code.trim(), msg.trim()),
            None => StoreError::Transport(format!("http {status}: {body}")),
        }
    }

    fn send(
        &self,
        req: reqwest::blocking::RequestBuilder,
    ) -> Result<String, StoreError> {
        let resp = req
            .send()
            .map_err(|e| StoreError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| StoreError::Transport(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(body)
        } else {
            Err(Self::read_error(status, &body))
        }
    }
}

impl CapsuleTransport for HttpTransport {
    fn put_capsule(&self, id: &CapsuleId, dc: &DataCapsule) -> Result<(), StoreError> {
        self.send(
            self.client
                .put(format!("{}/capsules", self.base))
                .body(envelope::write_capsule(id, dc)),
        )
        .map(|_| ())
    }

    fn fetch_capsule(&self, dci: &CapsuleId) -> Result<(CapsuleId, DataCapsule), StoreError> {
        let body = self.send(
            self.client
                .get(format!("{}/admin/capsules/{}", self.base, encode_dci(dci))),
        )?;
        envelope::read_capsule(&body).map_err(|e| StoreError::Transport(e.to_string()))
    }

    fn register_tokens(
        &self,
        dci: &CapsuleId,
        revocation: &RevocationToken,
        token: &DownloadToken,
    ) -> Result<(), StoreError> {
        self.send(
            self.client
                .post(format!(
                    "{}/capsules/{}/tokens",
                    self.base,
                    encode_dci(dci)
                ))
                .body(envelope::write_token_pair(revocation, token)),
        )
        .map(|_| ())
    }

    fn download(
        &self,
        dci: &CapsuleId,
        param: &DownloadParameter,
    ) -> Result<(CapsuleId, DataCapsule), StoreError> {
        let body = self.send(
            self.client
                .post(format!(
                    "{}/capsules/{}/download",
                    self.base,
                    encode_dci(dci)
                ))
                .body(envelope::write_download_parameter(param)),
        )?;
        envelope::read_capsule(&body).map_err(|e| StoreError::Transport(e.to_string()))
    }

    fn sweep(&self) -> Result<u64, StoreError> {
        let body = self.send(self.client.post(format!("{}/admin/sweep", self.base)))?;
        body.trim()
            .parse()
            .map_err(|_| StoreError::Transport(format!("sweep returned `{body}`")))
    }

    fn set_clock(&self, now: u64) -> Result<(), StoreError> {
        self.send(
            self.client
                .post(format!("{}/admin/clock", self.base))
                .body(now.to_string()),
        )
        .map(|_| ())
    }
}
