//! Thin HTTP adapters for hosted models.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    Backend, BackendDescriptor, BackendKind, ConditionForm, LatentCodec, LatentTensor,
    NoisePredictor, Vllm,
};
use crate::imageops::{decode_image, encode_mask_png, encode_png, BinaryMask, Image};
use crate::{Error, Result};

/// Retry schedule for transient transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            timeout_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    fn client(&self) -> Result<reqwest::blocking::Client> {
        reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
            .map_err(|e| Error::Transport {
                backend: "http".into(),
                retries: 0,
                message: e.to_string(),
            })
    }

    /// POSTs `body`, retrying connection errors, 429 and 5xx with exponential backoff.
    fn post_json(
        &self,
        client: &reqwest::blocking::Client,
        backend: &str,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<Value> {
        let mut attempt = 0u32;
        loop {
            let mut req = client.post(url).json(body);
            if let Some(key) = bearer {
                req = req.bearer_auth(key);
            }
            let failure = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Value>().map_err(|e| Error::Parse {
                        raw: format!("invalid JSON from {url}: {e}"),
                    });
                }
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    let message = format!("HTTP {status}: {text}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        return Err(Error::Transport {
                            backend: backend.into(),
                            retries: attempt,
                            message,
                        });
                    }
                    message
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.max_retries {
                return Err(Error::Transport {
                    backend: backend.into(),
                    retries: attempt,
                    message: failure,
                });
            }
            log::warn!("{backend}: attempt {} failed: {failure}", attempt + 1);
            std::thread::sleep(Duration::from_millis(
                self.initial_backoff_ms.saturating_mul(1 << attempt.min(16)),
            ));
            attempt += 1;
        }
    }
}

fn png_data_url(image: &Image) -> String {
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(encode_png(image))
    )
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

/// Chat-completions style vision-language endpoint.
///
/// The API key is read from the environment variable named by `api_key_env`
/// on every call, so it never appears in configs or manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatVllm {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_key_env() -> String {
    "TEXSYNTH_VLLM_API_KEY".into()
}

impl Backend for ChatVllm {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Vllm, "chat-vllm", false).with_config(json!({
            "endpoint": self.endpoint,
            "model": self.model,
            "api_key_env": self.api_key_env,
        }))
    }
}

impl Vllm for ChatVllm {
    fn ask(&self, _object_name: &str, question: &str, image: &Image) -> Result<String> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{
                "role": "user",
                "content": [
                    { "type": "text", "text": question },
                    { "type": "image_url", "image_url": { "url": png_data_url(image) } }
                ]
            }]
        });
        let key = std::env::var(&self.api_key_env).ok();
        let client = self.retry.client()?;
        let resp = self
            .retry
            .post_json(&client, "chat-vllm", &self.endpoint, key.as_deref(), &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Parse {
                raw: resp.to_string(),
            })
    }
}

/// Remote latent diffusion service exposing `/encode`, `/decode` and
/// `/predict_noise` as JSON endpoints.
///
/// Images travel as base64 PNG; latents as `{channels, height, width, data}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpDiffusion {
    pub base_url: String,
    #[serde(default = "default_downscale")]
    pub downscale: usize,
    #[serde(default = "default_max_t")]
    pub max_t: usize,
    #[serde(default)]
    pub condition: ConditionForm,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_downscale() -> usize {
    8
}

fn default_max_t() -> usize {
    1000
}

impl HttpDiffusion {
    fn call(&self, route: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{route}", self.base_url.trim_end_matches('/'));
        let client = self.retry.client()?;
        self.retry.post_json(&client, "http-diffusion", &url, None, body)
    }

    fn latent_from(value: Value) -> Result<LatentTensor> {
        let raw = value.to_string();
        let t: LatentTensor = serde_json::from_value(value).map_err(|_| Error::Parse { raw })?;
        LatentTensor::new(t.channels, t.height, t.width, t.data)
    }
}

impl Backend for HttpDiffusion {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Inpainter, "http-diffusion", false).with_config(json!({
            "base_url": self.base_url,
            "downscale": self.downscale,
            "condition": self.condition,
        }))
    }
}

impl LatentCodec for HttpDiffusion {
    fn downscale(&self) -> usize {
        self.downscale
    }

    fn encode(&self, image: &Image) -> Result<LatentTensor> {
        let (w, h) = image.dims();
        if w % self.downscale != 0 || h % self.downscale != 0 {
            return Err(Error::invalid(format!(
                "{w}x{h} image is not divisible by {}",
                self.downscale
            )));
        }
        let resp = self.call("encode", &json!({ "image_png": b64(&encode_png(image)) }))?;
        Self::latent_from(resp)
    }

    fn decode(&self, latent: &LatentTensor) -> Result<Image> {
        let resp = self.call("decode", &json!({ "latent": latent }))?;
        let png = resp
            .get("image_png")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Parse {
                raw: resp.to_string(),
            })?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(png)
            .map_err(|_| Error::Parse { raw: png.into() })?;
        decode_image(&bytes)
    }
}

impl NoisePredictor for HttpDiffusion {
    fn predict_noise(
        &self,
        z_t: &LatentTensor,
        t: usize,
        inpaint_mask: &BinaryMask,
        condition: &Image,
        prompt: &str,
    ) -> Result<LatentTensor> {
        super::check_noise_inputs(z_t, t, self.max_t, self.downscale, inpaint_mask, condition)?;
        let resp = self.call(
            "predict_noise",
            &json!({
                "latent": z_t,
                "t": t,
                "mask_png": b64(&encode_mask_png(inpaint_mask)),
                "condition_png": b64(&encode_png(condition)),
                "prompt": prompt,
            }),
        )?;
        let eps = Self::latent_from(resp)?;
        eps.check_same_shape(z_t)?;
        Ok(eps)
    }

    fn condition_form(&self) -> ConditionForm {
        self.condition
    }
}
