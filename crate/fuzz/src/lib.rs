//! Checks shared by the fuzz targets and the corpus replay test. Each takes
//! arbitrary bytes and panics only on a real defect.

use meshforge::backends::geometry::{crop_rect, DetectionBox, ImageSize, LassoPolygon, Point};
use meshforge::backends::http::{decode_mesh_payload, decode_response, output_field};
use meshforge::backends::{SceneReply, Transcript};
use meshforge::mesh::{read_mesh, write_mesh, MeshFormat};
use meshforge::pipeline::{Event, Script};
use meshforge::recommend::{parse_suggestion_line, parse_suggestions};
use meshforge::repo::decode_log_line;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

fn reencode_is_stable(data: &[u8], format: MeshFormat) {
    if let Ok(mesh) = read_mesh(data, format) {
        let once = write_mesh(&mesh, format);
        let again = read_mesh(&once, format).expect("re-read of written mesh");
        assert_eq!(write_mesh(&again, format), once);
        if format == MeshFormat::Binary {
            assert_eq!(once, data);
        }
        let _ = mesh.validate();
    }
}

pub fn mesh_binary(data: &[u8]) {
    reencode_is_stable(data, MeshFormat::Binary);
}

pub fn mesh_obj(data: &[u8]) {
    reencode_is_stable(data, MeshFormat::Obj);
}

pub fn suggestions(data: &[u8]) {
    let Some(raw) = text(data) else { return };
    let parsed = parse_suggestions(raw);
    for s in &parsed.suggestions {
        assert!(!s.name.is_empty());
        assert_eq!(s.name.trim(), s.name);
    }
    for line in raw.lines() {
        let _ = parse_suggestion_line(line);
    }
}

pub fn repo_log_line(data: &[u8]) {
    let Some(line) = text(data) else { return };
    if let Ok(entry) = decode_log_line(line) {
        let encoded = serde_json::to_string(&entry).expect("log entry serializes");
        assert_eq!(decode_log_line(&encoded).expect("re-decode"), entry);
    }
}

pub fn session_script(data: &[u8]) {
    let Some(raw) = text(data) else { return };
    if let Ok(script) = Script::from_json(raw) {
        let encoded = serde_json::to_string(&script).expect("script serializes");
        assert_eq!(Script::from_json(&encoded).expect("re-decode"), script);
    }
    if let Ok(event) = serde_json::from_str::<Event>(raw) {
        let encoded = serde_json::to_string(&event).expect("event serializes");
        assert_eq!(serde_json::from_str::<Event>(&encoded).expect("re-decode"), event);
    }
}

/// First two bytes are the HTTP status, the rest the body.
pub fn backend_response(data: &[u8]) {
    if data.len() < 2 {
        return;
    }
    let status = u16::from_le_bytes([data[0], data[1]]) % 600;
    let Ok(out) = decode_response(status, &data[2..]) else { return };
    assert!(out.is_object());
    if let Ok(b64) = output_field::<String>(out.clone(), "mesh") {
        let _ = decode_mesh_payload(&b64);
    }
    if let Ok(dets) = output_field::<Vec<DetectionBox>>(out.clone(), "detections") {
        for d in dets {
            let _ = d.check();
        }
    }
    let _ = output_field::<SceneReply>(out.clone(), "scene");
    let _ = output_field::<Transcript>(out.clone(), "transcript");
    let _ = output_field::<Vec<String>>(out, "labels");
}

/// JSON polygon, then probe points and image sizes derived from its bounds.
pub fn lasso(data: &[u8]) {
    let Ok(poly) = serde_json::from_slice::<LassoPolygon>(data) else { return };
    let area = poly.signed_area();
    assert!(area.is_finite() && area != 0.0);
    let b = poly.bounds();
    assert!(b.x_min <= b.x_max && b.y_min <= b.y_max);
    let c = b.center();
    let _ = poly.contains(c);
    let _ = poly.contains(Point::new(b.x_min - 1.0, c.y));
    if b.x_max.abs() < 1e15 {
        assert!(!poly.contains(Point::new(b.x_max + 1.0, c.y)));
    }
    for (w, h) in [(1, 1), (640, 480), (4096, 4096)] {
        if let Ok(r) = crop_rect(&poly, ImageSize { width: w, height: h }) {
            assert!(r.x_min >= 0.0 && r.y_min >= 0.0 && r.x_max <= w as f64 && r.y_max <= h as f64);
            assert!(r.x_min < r.x_max && r.y_min < r.y_max);
        }
    }
}
