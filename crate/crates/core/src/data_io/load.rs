use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::model::{
    Dataset, ImageRecord, PolypType, Rating, RatingRecord, ReferenceInstance, ScoredPrediction,
};
use super::{Diagnostic, DiagnosticKind};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_vertices, BBox, BinaryMask, Point, Run};

/// Accumulates diagnostics for one file.
struct Sink {
    file: String,
    errors: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
}

impl Sink {
    fn new(file: &str) -> Self {
        Self {
            file: file.to_string(),
            errors: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn diag(&self, loc: &str, kind: DiagnosticKind, message: String) -> Diagnostic {
        Diagnostic {
            file: self.file.clone(),
            location: loc.to_string(),
            kind,
            message,
        }
    }

    fn error(&mut self, loc: &str, kind: DiagnosticKind, message: impl Into<String>) {
        let d = self.diag(loc, kind, message.into());
        self.errors.push(d);
    }

    fn warn(&mut self, loc: &str, kind: DiagnosticKind, message: impl Into<String>) {
        let d = self.diag(loc, kind, message.into());
        log::warn!("{d}");
        self.warnings.push(d);
    }

    fn finish<T>(self, value: T) -> Result<(T, Vec<Diagnostic>)> {
        if self.errors.is_empty() {
            Ok((value, self.warnings))
        } else {
            Err(Error::Validation(self.errors))
        }
    }

    fn parse(&mut self, text: &str) -> Option<Value> {
        match serde_json::from_str(text) {
            Ok(v) => Some(v),
            Err(e) => {
                let loc = format!("{}:{}", e.line(), e.column());
                self.error(&loc, DiagnosticKind::Syntax, e.to_string());
                None
            }
        }
    }

    fn object<'v>(&mut self, v: &'v Value, loc: &str) -> Option<&'v Map<String, Value>> {
        let o = v.as_object();
        if o.is_none() {
            self.error(loc, DiagnosticKind::InvalidValue, "expected an object");
        }
        o
    }

    fn array<'v>(&mut self, v: &'v Value, loc: &str) -> Option<&'v Vec<Value>> {
        let a = v.as_array();
        if a.is_none() {
            self.error(loc, DiagnosticKind::InvalidValue, "expected an array");
        }
        a
    }

    fn field<'v>(&mut self, o: &'v Map<String, Value>, key: &str, loc: &str) -> Option<&'v Value> {
        let v = o.get(key);
        if v.is_none() {
            self.error(loc, DiagnosticKind::MissingField, format!("missing \"{key}\""));
        }
        v
    }

    fn string(&mut self, o: &Map<String, Value>, key: &str, loc: &str) -> Option<String> {
        let v = self.field(o, key, loc)?;
        match v.as_str() {
            Some(s) if !s.is_empty() => Some(s.to_string()),
            _ => {
                self.error(
                    &format!("{loc}.{key}"),
                    DiagnosticKind::InvalidValue,
                    "expected a nonempty string",
                );
                None
            }
        }
    }

    fn optional_string(&mut self, o: &Map<String, Value>, key: &str, loc: &str) -> Option<String> {
        match o.get(key) {
            None | Some(Value::Null) => Some(String::new()),
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.error(&format!("{loc}.{key}"), DiagnosticKind::InvalidValue, "expected a string");
                None
            }
        }
    }

    fn positive_u32(&mut self, o: &Map<String, Value>, key: &str, loc: &str) -> Option<u32> {
        let v = self.field(o, key, loc)?;
        match v.as_u64().and_then(|n| u32::try_from(n).ok()) {
            Some(n) if n > 0 => Some(n),
            _ => {
                self.error(
                    &format!("{loc}.{key}"),
                    DiagnosticKind::OutOfRange,
                    format!("expected a positive integer, got {v}"),
                );
                None
            }
        }
    }

    fn number(&mut self, v: &Value, loc: &str) -> Option<f64> {
        let x = v.as_f64().filter(|x| x.is_finite());
        if x.is_none() {
            self.error(loc, DiagnosticKind::InvalidValue, format!("expected a finite number, got {v}"));
        }
        x
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------- dataset

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_dataset(&read(path)?, &file_label(path))
}

/// Parses a dataset document. Polygons are rasterized onto their image grid.
pub fn parse_dataset(text: &str, file: &str) -> Result<Dataset> {
    let mut sink = Sink::new(file);
    let Some(root) = sink.parse(text) else {
        return Err(Error::Validation(sink.errors));
    };
    let Some(root) = sink.object(&root, "$") else {
        return Err(Error::Validation(sink.errors));
    };

    let mut images = Vec::new();
    let mut dims: HashMap<String, (u32, u32)> = HashMap::new();
    let list = match sink.field(root, "images", "$") {
        Some(v) => sink.array(v, "images"),
        None => None,
    };
    if let Some(list) = list {
        for (i, v) in list.iter().enumerate() {
            let loc = format!("images[{i}]");
            let Some(o) = sink.object(v, &loc) else { continue };
            let id = sink.string(o, "image_id", &loc);
            let w = sink.positive_u32(o, "width", &loc);
            let h = sink.positive_u32(o, "height", &loc);
            let center = sink.string(o, "center_id", &loc);
            let patient = sink.optional_string(o, "patient_id", &loc);
            let sequence = sink.optional_string(o, "sequence_id", &loc);
            let (Some(id), Some(w), Some(h), Some(center), Some(patient), Some(sequence)) =
                (id, w, h, center, patient, sequence)
            else {
                continue;
            };
            if dims.insert(id.clone(), (w, h)).is_some() {
                sink.error(&loc, DiagnosticKind::Duplicate, format!("image_id {id} appears twice"));
                continue;
            }
            images.push(ImageRecord {
                image_id: id,
                width: w,
                height: h,
                center_id: center,
                patient_id: patient,
                sequence_id: sequence,
            });
        }
    }

    let mut refs = Vec::new();
    let mut ref_ids = HashSet::new();
    match root.get("annotations") {
        None => sink.error("$", DiagnosticKind::MissingField, "missing \"annotations\""),
        Some(v) => {
            if let Some(list) = sink.array(v, "annotations") {
                for (i, v) in list.iter().enumerate() {
                    let loc = format!("annotations[{i}]");
                    if let Some(r) = parse_annotation(&mut sink, v, &loc, &dims) {
                        if !ref_ids.insert(r.reference_id.clone()) {
                            sink.error(
                                &loc,
                                DiagnosticKind::Duplicate,
                                format!("reference_id {} appears twice", r.reference_id),
                            );
                            continue;
                        }
                        refs.push(r);
                    }
                }
            }
        }
    }
    if !sink.errors.is_empty() {
        return Err(Error::Validation(sink.errors));
    }
    Dataset::new(images, refs)
}

fn parse_annotation(
    sink: &mut Sink,
    v: &Value,
    loc: &str,
    dims: &HashMap<String, (u32, u32)>,
) -> Option<ReferenceInstance> {
    let o = sink.object(v, loc)?;
    let id = sink.string(o, "reference_id", loc);
    let image_id = sink.string(o, "image_id", loc)?;
    let polyp_type = match o.get("polyp_type") {
        None | Some(Value::Null) => Some(None),
        Some(t) => match serde_json::from_value::<PolypType>(t.clone()) {
            Ok(t) => Some(Some(t)),
            Err(_) => {
                sink.error(
                    &format!("{loc}.polyp_type"),
                    DiagnosticKind::InvalidValue,
                    format!("expected \"flat\" or \"protruded\", got {t}"),
                );
                None
            }
        },
    };
    let Some(&(w, h)) = dims.get(&image_id) else {
        sink.error(
            &format!("{loc}.image_id"),
            DiagnosticKind::DanglingReference,
            format!("unknown image_id {image_id}"),
        );
        return None;
    };
    let mask = match (o.get("polygon"), o.get("mask")) {
        (Some(p), None) => parse_polygon(sink, p, &format!("{loc}.polygon"), w, h),
        (None, Some(m)) => parse_mask(sink, m, &format!("{loc}.mask"), w, h),
        (None, None) => {
            sink.error(loc, DiagnosticKind::MissingField, "missing \"polygon\" or \"mask\"");
            None
        }
        (Some(_), Some(_)) => {
            sink.error(loc, DiagnosticKind::InvalidValue, "both \"polygon\" and \"mask\" given");
            None
        }
    }?;
    let (id, polyp_type) = (id?, polyp_type?);
    if mask.is_empty() {
        sink.error(loc, DiagnosticKind::EmptyMask, format!("reference {id} covers no pixel"));
        return None;
    }
    ReferenceInstance::new(id, image_id, mask, polyp_type).ok()
}

fn parse_polygon(sink: &mut Sink, v: &Value, loc: &str, w: u32, h: u32) -> Option<BinaryMask> {
    let list = sink.array(v, loc)?;
    let mut pts = Vec::with_capacity(list.len());
    let mut ok = true;
    for (i, p) in list.iter().enumerate() {
        let ploc = format!("{loc}[{i}]");
        match p.as_array().filter(|a| a.len() == 2) {
            Some(a) => match (sink.number(&a[0], &ploc), sink.number(&a[1], &ploc)) {
                (Some(x), Some(y)) => pts.push(Point::new(x, y)),
                _ => ok = false,
            },
            None => {
                sink.error(&ploc, DiagnosticKind::InvalidValue, "expected [x, y]");
                ok = false;
            }
        }
    }
    if !ok {
        return None;
    }
    if pts.len() < 3 {
        sink.error(loc, DiagnosticKind::InvalidValue, "a polygon needs at least 3 vertices");
        return None;
    }
    Some(rasterize_vertices(&pts, w, h))
}

fn parse_mask(sink: &mut Sink, v: &Value, loc: &str, w: u32, h: u32) -> Option<BinaryMask> {
    let o = sink.object(v, loc)?;
    let runs_v = sink.field(o, "runs", loc)?;
    let runs: Vec<Run> = match serde_json::from_value(runs_v.clone()) {
        Ok(r) => r,
        Err(_) => {
            sink.error(
                &format!("{loc}.runs"),
                DiagnosticKind::InvalidValue,
                "expected a list of [y, x, len] triples",
            );
            return None;
        }
    };
    match BinaryMask::from_runs(w, h, runs) {
        Ok(m) => Some(m),
        Err(e) => {
            sink.error(&format!("{loc}.runs"), DiagnosticKind::OutOfRange, e.to_string());
            None
        }
    }
}

#[derive(Serialize)]
struct DatasetFile<'a> {
    images: &'a [ImageRecord],
    annotations: Vec<AnnotationFile<'a>>,
}

#[derive(Serialize)]
struct AnnotationFile<'a> {
    reference_id: &'a str,
    image_id: &'a str,
    mask: MaskFile<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    polyp_type: Option<PolypType>,
}

#[derive(Serialize)]
struct MaskFile<'a> {
    runs: &'a [Run],
}

/// Dataset document with masks as runs (exact round trip).
pub fn dataset_to_json(ds: &Dataset) -> String {
    let doc = DatasetFile {
        images: ds.images(),
        annotations: ds
            .references()
            .iter()
            .map(|r| AnnotationFile {
                reference_id: &r.reference_id,
                image_id: &r.image_id,
                mask: MaskFile { runs: r.mask().runs() },
                polyp_type: r.polyp_type,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &dataset_to_json(ds))
}

// ------------------------------------------------------------ predictions

/// Loads predictions; with a dataset, image ids are checked and boxes clamped
/// to their image (with a warning).
pub fn load_predictions(path: impl AsRef<Path>, dataset: Option<&Dataset>) -> Result<Vec<ScoredPrediction>> {
    let path = path.as_ref();
    parse_predictions(&read(path)?, &file_label(path), dataset).map(|(p, _)| p)
}

/// Returns the predictions plus warnings (clamped boxes).
pub fn parse_predictions(
    text: &str,
    file: &str,
    dataset: Option<&Dataset>,
) -> Result<(Vec<ScoredPrediction>, Vec<Diagnostic>)> {
    let mut sink = Sink::new(file);
    let Some(root) = sink.parse(text) else {
        return Err(Error::Validation(sink.errors));
    };
    let Some(list) = sink.array(&root, "$") else {
        return Err(Error::Validation(sink.errors));
    };
    let mut out = Vec::with_capacity(list.len());
    let mut ids = HashSet::new();
    for (i, v) in list.iter().enumerate() {
        let loc = format!("[{i}]");
        let Some(o) = sink.object(v, &loc) else { continue };
        let id = sink.string(o, "prediction_id", &loc);
        let image_id = sink.string(o, "image_id", &loc);
        let bbox = sink.field(o, "bbox", &loc).and_then(|b| parse_bbox(&mut sink, b, &format!("{loc}.bbox")));
        let confidence = sink.field(o, "confidence", &loc).and_then(|c| {
            let cloc = format!("{loc}.confidence");
            let c = sink.number(c, &cloc)?;
            if (0.0..=1.0).contains(&c) {
                Some(c)
            } else {
                sink.error(&cloc, DiagnosticKind::OutOfRange, format!("confidence {c} outside [0, 1]"));
                None
            }
        });
        let (Some(id), Some(image_id), Some(mut bbox), Some(confidence)) = (id, image_id, bbox, confidence) else {
            continue;
        };
        if !ids.insert(id.clone()) {
            sink.error(&loc, DiagnosticKind::Duplicate, format!("prediction_id {id} appears twice"));
            continue;
        }
        if let Some(ds) = dataset {
            let Some(img) = ds.image(&image_id) else {
                sink.error(
                    &format!("{loc}.image_id"),
                    DiagnosticKind::DanglingReference,
                    format!("unknown image_id {image_id}"),
                );
                continue;
            };
            let clamped = bbox.clamp_to(f64::from(img.width), f64::from(img.height));
            if clamped != bbox {
                sink.warn(
                    &format!("{loc}.bbox"),
                    DiagnosticKind::Clamped,
                    format!("box of {id} clamped to the {}x{} image", img.width, img.height),
                );
                bbox = clamped;
            }
        }
        out.push(ScoredPrediction {
            prediction_id: id,
            image_id,
            bbox,
            confidence,
        });
    }
    sink.finish(out)
}

fn parse_bbox(sink: &mut Sink, v: &Value, loc: &str) -> Option<BBox> {
    let a = v.as_array().filter(|a| a.len() == 4);
    let Some(a) = a else {
        sink.error(loc, DiagnosticKind::InvalidValue, "expected [x_min, y_min, x_max, y_max]");
        return None;
    };
    let mut c = [0.0; 4];
    for (slot, x) in c.iter_mut().zip(a) {
        *slot = sink.number(x, loc)?;
    }
    match BBox::new(c[0], c[1], c[2], c[3]) {
        Ok(b) => Some(b),
        Err(e) => {
            sink.error(loc, DiagnosticKind::InvalidValue, e.to_string());
            None
        }
    }
}

pub fn predictions_to_json(preds: &[ScoredPrediction]) -> String {
    let mut s = serde_json::to_string_pretty(preds).expect("serializable");
    s.push('\n');
    s
}

pub fn write_predictions(preds: &[ScoredPrediction], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &predictions_to_json(preds))
}

// ---------------------------------------------------------------- ratings

/// Loads ratings; with predictions, every rated id must exist among them.
pub fn load_ratings(path: impl AsRef<Path>, predictions: Option<&[ScoredPrediction]>) -> Result<Vec<RatingRecord>> {
    let path = path.as_ref();
    parse_ratings(&read(path)?, &file_label(path), predictions)
}

pub fn parse_ratings(text: &str, file: &str, predictions: Option<&[ScoredPrediction]>) -> Result<Vec<RatingRecord>> {
    let mut sink = Sink::new(file);
    let known: Option<HashSet<&str>> =
        predictions.map(|ps| ps.iter().map(|p| p.prediction_id.as_str()).collect());
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            sink.error("line 1", DiagnosticKind::Syntax, e.to_string());
            return Err(Error::Validation(sink.errors));
        }
    };
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(pi), Some(ri), Some(ai)) = (col("prediction_id"), col("rating"), col("rater_id")) else {
        sink.error(
            "line 1",
            DiagnosticKind::MissingField,
            "header must name prediction_id, rating and rater_id",
        );
        return Err(Error::Validation(sink.errors));
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                sink.error(&format!("line {line}"), DiagnosticKind::Syntax, e.to_string());
                continue;
            }
        };
        let loc = format!("line {}", rec.position().map_or(0, |p| p.line()));
        let get = |i: usize| rec.get(i).unwrap_or("");
        let (pid, rating, rater) = (get(pi), get(ri), get(ai));
        let mut ok = true;
        if pid.is_empty() {
            sink.error(&loc, DiagnosticKind::MissingField, "empty prediction_id");
            ok = false;
        } else if let Some(k) = &known {
            if !k.contains(pid) {
                sink.error(&loc, DiagnosticKind::DanglingReference, format!("unknown prediction_id {pid}"));
                ok = false;
            }
        }
        let rating = match rating {
            "useful" => Some(Rating::Useful),
            "not_useful" => Some(Rating::NotUseful),
            other => {
                sink.error(
                    &loc,
                    DiagnosticKind::InvalidValue,
                    format!("rating must be useful or not_useful, got \"{other}\""),
                );
                None
            }
        };
        if let (true, Some(rating)) = (ok, rating) {
            out.push(RatingRecord {
                prediction_id: pid.to_string(),
                rating,
                rater_id: rater.to_string(),
            });
        }
    }
    sink.finish(out).map(|(r, _)| r)
}

pub fn write_ratings(ratings: &[RatingRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    for r in ratings {
        w.serialize(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let text = String::from_utf8(bytes).expect("csv output is utf-8");
    // serialize() writes the header only with the first record
    let text = if ratings.is_empty() { "prediction_id,rating,rater_id\n".to_string() } else { text };
    write(path, &text)
}
