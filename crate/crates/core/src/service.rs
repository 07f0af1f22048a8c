//! Read-only HTTP/JSON API over sealed runs.
//!
//! Routing is a pure function of (method, target, body) so responses can be
//! tested without sockets; the listener only frames HTTP/1.1 requests.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};

use crate::config::{Scale, Shape};
use crate::metrics::{temporal_cells, Metric};
use crate::selection::{resolve_selection, SelectionError, SelectionRequest};
use crate::store::{ComboData, RunData, RunStore};

const MAX_HEADER_BYTES: usize = 16 * 1024;
const MAX_BODY_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Response {
    fn json(status: u16, v: &Value) -> Self {
        Self { status, body: serde_json::to_vec(v).expect("json values serialize") }
    }

    fn ok(v: &Value) -> Self {
        Self::json(200, v)
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, &json!({ "error": message.into() }))
    }

    pub fn body_json(&self) -> Value {
        serde_json::from_slice(&self.body).expect("responses are json")
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        413 => "Payload Too Large",
        _ => "Internal Server Error",
    }
}

type Query = BTreeMap<String, String>;

fn parse_query(q: &str) -> Query {
    form_urlencoded::parse(q.as_bytes()).into_owned().collect()
}

pub struct Service {
    store: RunStore,
}

impl Service {
    pub fn new(store: RunStore) -> Self {
        Self { store }
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    /// Dispatches one request. `target` is the path with optional `?query`.
    pub fn handle(&self, method: &str, target: &str, body: &[u8]) -> Response {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let q = parse_query(query);
        let get = |f: fn(&Self, &Query) -> Result<Value, Response>| {
            if method != "GET" {
                return Response::error(405, format!("{method} not allowed on {path}"));
            }
            f(self, &q).map(|v| Response::ok(&v)).unwrap_or_else(|e| e)
        };
        match path {
            "/api/runs" => get(Self::runs),
            "/api/map" => get(Self::map),
            "/api/scatter" => get(Self::scatter),
            "/api/attribution" => get(Self::attribution),
            "/api/temporal" => get(Self::temporal),
            "/api/meta" => get(Self::meta),
            "/api/selection/resolve" => {
                if method != "POST" {
                    return Response::error(405, format!("{method} not allowed on {path}"));
                }
                self.resolve(body).map(|v| Response::ok(&v)).unwrap_or_else(|e| e)
            }
            _ => Response::error(404, format!("no route for {path}")),
        }
    }

    fn run(&self, q: &Query) -> Result<&RunData, Response> {
        let id = q.get("run").map(String::as_str);
        self.store.run(id).ok_or_else(|| Response::error(404, format!("unknown run {}", id.unwrap_or(""))))
    }

    fn shape_scale(q: &Query) -> Result<(Shape, Scale), Response> {
        let shape = q.get("shape").ok_or_else(|| Response::error(400, "missing shape"))?;
        let scale = q.get("scale").ok_or_else(|| Response::error(400, "missing scale"))?;
        let shape: Shape = shape.parse().map_err(|e: crate::config::ConfigError| Response::error(400, e.0))?;
        let scale: Scale = scale.parse().map_err(|e: crate::config::ConfigError| Response::error(400, e.0))?;
        Ok((shape, scale))
    }

    fn combo<'a>(&'a self, q: &Query) -> Result<(&'a RunData, &'a ComboData), Response> {
        let run = self.run(q)?;
        let (shape, scale) = Self::shape_scale(q)?;
        let combo = run.combo(shape, scale).map_err(|e| Response::error(404, e.to_string()))?;
        Ok((run, combo))
    }

    fn runs(&self, _: &Query) -> Result<Value, Response> {
        Ok(Value::Array(
            self.store
                .runs
                .values()
                .map(|r| {
                    json!({
                        "run_id": r.manifest.run_id,
                        "sealed": r.manifest.sealed,
                        "combos": r.manifest.combos,
                        "days": r.manifest.days,
                        "train_days": r.manifest.train_days,
                        "test_days": r.manifest.test_days,
                    })
                })
                .collect(),
        ))
    }

    fn map(&self, q: &Query) -> Result<Value, Response> {
        let (run, c) = self.combo(q)?;
        let cells: Vec<Value> = c
            .diagnostics
            .iter()
            .zip(&c.vsup.cells)
            .map(|(d, v)| {
                let center = c.grid.cell_center(d.region.index);
                json!({
                    "region_id": d.region.index,
                    "center": [center.lon, center.lat],
                    "vsup": { "level": v.cell.level, "bin": v.cell.bin },
                    "mean_volume": d.mean_volume,
                    "mean_abs_error": d.mean_abs_error,
                })
            })
            .collect();
        Ok(json!({
            "run_id": run.manifest.run_id,
            "shape": c.shape,
            "scale": c.scale,
            "w": c.grid.w,
            "h": c.grid.h,
            "bbox": run.bbox,
            "value_edges": c.vsup.value_edges,
            "error_edges": c.vsup.error_edges,
            "cells": cells,
        }))
    }

    fn scatter(&self, q: &Query) -> Result<Value, Response> {
        let (run, c) = self.combo(q)?;
        let s = &c.scatter;
        let points: Vec<Value> = s
            .points
            .iter()
            .map(|p| {
                json!({
                    "region_id": p.region.index,
                    "z_value": p.z_value,
                    "z_lag": p.z_lag,
                    "lisa": p.lisa,
                    "z_error": p.z_error,
                    "colorable": p.colorable,
                })
            })
            .collect();
        Ok(json!({
            "run_id": run.manifest.run_id,
            "shape": c.shape,
            "scale": c.scale,
            "points": points,
            "global_i": s.summary.as_ref().map(|m| m.global_i),
            "global_i_binary": s.global_i_binary,
            "regression": s.summary.as_ref().map(|m| json!({ "slope": m.regression_slope, "intercept": m.intercept })),
            "pearson_r": s.summary.as_ref().and_then(|m| m.pearson_r),
            "p_value": s.summary.as_ref().and_then(|m| m.p_value),
            "permutation_p_value": s.permutation_p_value,
            "undefined_reason": s.undefined_reason,
        }))
    }

    fn attribution(&self, q: &Query) -> Result<Value, Response> {
        let run = self.run(q)?;
        let shape: Shape = q
            .get("shape")
            .ok_or_else(|| Response::error(400, "missing shape"))?
            .parse()
            .map_err(|e: crate::config::ConfigError| Response::error(400, e.0))?;
        let metric = match q.get("metric") {
            None => Metric::Prmse,
            Some(m) => Metric::parse(m).ok_or_else(|| Response::error(400, format!("unknown metric {m:?}")))?,
        };
        let only: Option<String> = match q.get("scale") {
            Some(s) => Some(s.parse::<Scale>().map_err(|e| Response::error(400, e.0))?.to_string()),
            None => None,
        };
        let layout = run.layouts.get(&shape).ok_or_else(|| Response::error(404, format!("no layout for {shape}")))?;
        if let Some(s) = &only {
            if !layout.scales.contains(s) {
                return Err(Response::error(404, format!("scale {s} not in layout")));
            }
        }
        let plots: Vec<Value> = layout
            .plots
            .iter()
            .filter(|p| only.as_ref().is_none_or(|s| &p.scale == s))
            .map(|p| {
                json!({
                    "scale": p.scale,
                    "level": p.level,
                    "subset_index": p.subset_index,
                    "W": p.width,
                    "H": p.height,
                    "dots": p.dots.iter().map(|d| json!({
                        "region_id": d.region_id,
                        "x": d.x,
                        "y": d.y,
                        "diameter": d.diameter,
                        "volume": d.volume,
                        "mean_abs_error": d.mean_abs_error,
                        "color_value": d.color_value.get(&metric).copied().flatten(),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(json!({
            "run_id": run.manifest.run_id,
            "shape": shape,
            "metric": metric,
            "color_range": layout.color_range.get(&metric).copied().flatten(),
            "scales": layout.scales,
            "plots": plots,
            "child_map": layout.child_map,
        }))
    }

    fn temporal(&self, q: &Query) -> Result<Value, Response> {
        let (run, c) = self.combo(q)?;
        let region: usize = q
            .get("region")
            .ok_or_else(|| Response::error(400, "missing region"))?
            .parse()
            .map_err(|_| Response::error(400, "region must be a non-negative integer"))?;
        let (days, per_day) = (run.manifest.test_days, run.manifest.slots_per_day);
        let cells = temporal_cells(&c.observed, &c.predicted, region, &c.vsup.scale, days, per_day)
            .map_err(|e| Response::error(404, e.to_string()))?;
        let series = |t: &crate::tensor::FlowTensor| -> Vec<Vec<f64>> {
            (0..days).map(|d| (0..per_day).map(|s| t.at(d * per_day + s, region)).collect()).collect()
        };
        Ok(json!({
            "run_id": run.manifest.run_id,
            "shape": c.shape,
            "scale": c.scale,
            "region_id": region,
            "days": days,
            "slots_per_day": per_day,
            "cells": cells.iter().map(|row| row.iter().map(|v| json!({ "level": v.level, "bin": v.bin })).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "observed": series(&c.observed),
            "predicted": series(&c.predicted),
        }))
    }

    fn meta(&self, q: &Query) -> Result<Value, Response> {
        let run = self.run(q)?;
        Ok(json!({
            "manifest": run.manifest,
            "meta": run.meta,
        }))
    }

    fn resolve(&self, body: &[u8]) -> Result<Value, Response> {
        let req: SelectionRequest =
            serde_json::from_slice(body).map_err(|e| Response::error(400, format!("malformed selection: {e}")))?;
        let run = self
            .store
            .run(req.run.as_deref())
            .ok_or_else(|| Response::error(404, format!("unknown run {}", req.run.clone().unwrap_or_default())))?;
        match resolve_selection(&req, run) {
            Ok(r) => Ok(serde_json::to_value(r).expect("selection serializes")),
            Err(e @ SelectionError::Malformed(_)) => Err(Response::error(400, e.to_string())),
            Err(e @ SelectionError::NotFound(_)) => Err(Response::error(404, e.to_string())),
        }
    }
}

fn read_request(stream: &TcpStream) -> std::io::Result<Option<(String, String, Vec<u8>)>> {
    let mut reader = BufReader::new(stream);
    let mut head = Vec::new();
    loop {
        let n = reader.read_until(b'\n', &mut head)?;
        if n == 0 {
            return Ok(None);
        }
        if head.ends_with(b"\r\n\r\n") || head.ends_with(b"\n\n") {
            break;
        }
        if head.len() > MAX_HEADER_BYTES {
            return Ok(None);
        }
    }
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    if !matches!(req.parse(&head), Ok(httparse::Status::Complete(_))) {
        return Ok(None);
    }
    let method = req.method.unwrap_or("").to_string();
    let target = req.path.unwrap_or("").to_string();
    let len = req
        .headers
        .iter()
        .find(|h| h.name.eq_ignore_ascii_case("content-length"))
        .and_then(|h| std::str::from_utf8(h.value).ok()?.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if len > MAX_BODY_BYTES {
        return Ok(Some((method, target, Vec::new())));
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    Ok(Some((method, target, body)))
}

fn write_response(mut stream: &TcpStream, r: &Response) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {} {}\r\nContent-Type: application/json; charset=utf-8\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        r.status,
        reason(r.status),
        r.body.len()
    )?;
    stream.write_all(&r.body)?;
    stream.flush()
}

fn handle_connection(stream: TcpStream, service: &Service) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    match read_request(&stream) {
        Ok(Some((method, target, body))) => {
            let resp = service.handle(&method, &target, &body);
            debug!("{method} {target} -> {}", resp.status);
            if let Err(e) = write_response(&stream, &resp) {
                debug!("write failed: {e}");
            }
        }
        Ok(None) => {
            let _ = write_response(&stream, &Response::error(400, "malformed request"));
        }
        Err(e) => debug!("read failed: {e}"),
    }
}

/// Binds the listener; fails if the address is in use.
pub fn bind(addr: impl ToSocketAddrs) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr)
}

/// Accepts connections forever, one thread per connection.
pub fn run(listener: TcpListener, service: Arc<Service>) {
    for stream in listener.incoming() {
        match stream {
            Ok(s) => {
                let svc = Arc::clone(&service);
                thread::spawn(move || handle_connection(s, &svc));
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}
