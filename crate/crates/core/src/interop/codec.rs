use std::collections::BTreeMap;

use super::{validate_as, Field, Format, Ontology, TranslationError};
use crate::model::{CanonicalRecord, Confidence, GeoLocation, RecordFields, SensorId};

/// A source value before it is interpreted against a canonical field.
enum RawValue {
    Text(String),
    List(Vec<String>),
}

impl RawValue {
    fn into_text(self) -> String {
        match self {
            RawValue::Text(t) => t,
            RawValue::List(items) => items.join(","),
        }
    }

    fn into_list(self) -> Vec<String> {
        match self {
            RawValue::List(items) => items,
            RawValue::Text(t) => t
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        }
    }
}

type Pairs = Vec<(String, RawValue)>;

/// Translates a native payload into a validated canonical record.
pub fn decode(
    payload: &[u8],
    format: Format,
    ontology: &Ontology,
) -> Result<CanonicalRecord, TranslationError> {
    let text = std::str::from_utf8(payload)
        .map_err(|e| TranslationError::map(format, "payload", format!("not UTF-8: {e}")))?;
    let pairs = match format {
        Format::Json => parse_json(text),
        Format::Csv => parse_csv(text),
        Format::Xmllite => parse_xmllite(text),
        Format::Kv => parse_kv(text),
    }
    .map_err(|reason| TranslationError::map(format, "payload", reason))?;

    let mut fields: BTreeMap<Field, RawValue> = BTreeMap::new();
    for (name, value) in pairs {
        let field = ontology
            .resolve_field(format, &name)
            .ok_or_else(|| TranslationError::map(format, &name, "no ontology mapping for field"))?;
        if fields.insert(field, value).is_some() {
            return Err(TranslationError::map(
                format,
                field.name(),
                "field given more than once",
            ));
        }
    }
    let record = build_record(fields, format, ontology)?;
    validate_as(&record, ontology, format)?;
    Ok(record)
}

fn build_record(
    mut fields: BTreeMap<Field, RawValue>,
    format: Format,
    ontology: &Ontology,
) -> Result<CanonicalRecord, TranslationError> {
    let mut take = |field: Field| -> Result<String, TranslationError> {
        fields
            .remove(&field)
            .map(|v| v.into_text().trim().to_string())
            .ok_or_else(|| TranslationError::map(format, field.name(), "required field missing"))
    };
    let bad = |field: Field, reason: String| TranslationError::map(format, field.name(), reason);

    let sensor_text = take(Field::SensorId)?;
    let sensor_id =
        SensorId::parse(&sensor_text).map_err(|e| bad(Field::SensorId, e.to_string()))?;

    let quantity_text = take(Field::Quantity)?;
    let quantity = ontology
        .resolve_quantity(&quantity_text)
        .ok_or_else(|| {
            bad(
                Field::Quantity,
                format!("unknown quantity {quantity_text:?}"),
            )
        })?
        .to_string();

    let value = parse_f64(&take(Field::Value)?).map_err(|r| bad(Field::Value, r))?;

    let unit_text = take(Field::Unit)?;
    // An unknown spelling is kept verbatim so validation reports the mismatch.
    let unit = ontology
        .resolve_unit(&quantity, &unit_text)
        .map(str::to_string)
        .unwrap_or(unit_text);

    let timestamp_text = take(Field::Timestamp)?;
    let timestamp = timestamp_text.parse::<u64>().map_err(|_| {
        bad(
            Field::Timestamp,
            format!("{timestamp_text:?} is not a ms timestamp"),
        )
    })?;

    let lat = parse_f64(&take(Field::Lat)?).map_err(|r| bad(Field::Lat, r))?;
    let lon = parse_f64(&take(Field::Lon)?).map_err(|r| bad(Field::Lon, r))?;
    let location = GeoLocation::new(lat, lon).map_err(|e| bad(Field::Lat, e.to_string()))?;

    let description = match fields.remove(&Field::Description) {
        Some(v) => v.into_text().trim().to_string(),
        None => ontology
            .quantity(&quantity)
            .map(|d| d.meaning.clone())
            .unwrap_or_default(),
    };
    let keywords = fields
        .remove(&Field::Keywords)
        .map(|v| {
            v.into_list()
                .into_iter()
                .map(|k| k.to_lowercase())
                .collect()
        })
        .unwrap_or_default();
    let confidence = match fields.remove(&Field::Confidence) {
        Some(v) => {
            let c = parse_f64(v.into_text().trim()).map_err(|r| bad(Field::Confidence, r))?;
            Confidence::new(c).map_err(|e| bad(Field::Confidence, e.to_string()))?
        }
        None => Confidence::CERTAIN,
    };

    CanonicalRecord::new(RecordFields {
        sensor_id,
        quantity,
        value,
        unit,
        timestamp,
        location,
        description,
        keywords,
        confidence,
    })
    .map_err(|e| TranslationError::map(format, "record", e.to_string()))
}

fn parse_f64(text: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{text:?} is not a finite number")),
    }
}

fn parse_json(text: &str) -> Result<Pairs, String> {
    use serde_json::Value;
    let value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(map) = value else {
        return Err("expected a flat JSON object".into());
    };
    map.into_iter()
        .map(|(k, v)| {
            let raw = match v {
                Value::String(s) => RawValue::Text(s),
                Value::Number(n) => RawValue::Text(n.to_string()),
                Value::Bool(b) => RawValue::Text(b.to_string()),
                Value::Array(items) => RawValue::List(
                    items
                        .into_iter()
                        .map(|i| match i {
                            Value::String(s) => Ok(s),
                            other => Err(format!(
                                "field {k}: list items must be strings, got {other}"
                            )),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                Value::Null | Value::Object(_) => {
                    return Err(format!(
                        "field {k}: nested or null values are not supported"
                    ))
                }
            };
            Ok((k, raw))
        })
        .collect()
}

fn parse_csv(text: &str) -> Result<Pairs, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| format!("invalid CSV header: {e}"))?
        .clone();
    let mut rows = reader.records();
    let row = rows
        .next()
        .ok_or("CSV payload has a header but no data row")?
        .map_err(|e| format!("invalid CSV row: {e}"))?;
    if rows.next().is_some() {
        return Err("CSV payload must carry exactly one data row".into());
    }
    Ok(headers
        .iter()
        .zip(row.iter())
        .map(|(h, v)| (h.trim().to_string(), RawValue::Text(v.to_string())))
        .collect())
}

fn parse_kv(text: &str) -> Result<Pairs, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        out.push((key.trim().to_string(), RawValue::Text(kv_unescape(value)?)));
    }
    Ok(out)
}

fn kv_escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

fn kv_unescape(value: &str) -> Result<String, String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            other => {
                return Err(format!(
                    "bad escape \\{}",
                    other.map(String::from).unwrap_or_default()
                ))
            }
        }
    }
    Ok(out)
}

fn xml_escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn xml_unescape(value: &str) -> Result<String, String> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let end = rest.find(';').ok_or("unterminated entity")?;
        let entity = &rest[1..end];
        match entity {
            "amp" => out.push('&'),
            "lt" => out.push('<'),
            "gt" => out.push('>'),
            "quot" => out.push('"'),
            "apos" => out.push('\''),
            _ => {
                let code = entity
                    .strip_prefix("#x")
                    .map(|h| u32::from_str_radix(h, 16))
                    .or_else(|| entity.strip_prefix('#').map(str::parse::<u32>))
                    .ok_or_else(|| format!("unknown entity &{entity};"))?
                    .map_err(|_| format!("bad character reference &{entity};"))?;
                out.push(char::from_u32(code).ok_or_else(|| format!("bad character &{entity};"))?);
            }
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Minimal reader for flat documents: one root element whose children are
/// attribute-free leaf elements.
fn parse_xmllite(text: &str) -> Result<Pairs, String> {
    let mut rest = text.trim();
    if let Some(after) = rest.strip_prefix("<?") {
        let end = after.find("?>").ok_or("unterminated XML declaration")?;
        rest = after[end + 2..].trim_start();
    }
    let (root, mut body) = open_tag(rest)?;
    let mut out = Vec::new();
    loop {
        body = body.trim_start();
        let closing = format!("</{root}>");
        if let Some(after) = body.strip_prefix(closing.as_str()) {
            if !after.trim().is_empty() {
                return Err("content after root element".into());
            }
            return Ok(out);
        }
        if body.is_empty() {
            return Err(format!("missing </{root}>"));
        }
        if body.starts_with("</") {
            return Err("unexpected closing tag".into());
        }
        let tag_end = body.find('>').ok_or("unterminated tag")?;
        let tag = &body[1..tag_end];
        if let Some(name) = tag.strip_suffix('/') {
            check_name(name.trim_end())?;
            out.push((name.trim_end().to_string(), RawValue::Text(String::new())));
            body = &body[tag_end + 1..];
            continue;
        }
        let (name, after) = open_tag(body)?;
        let close = format!("</{name}>");
        let end = after
            .find(close.as_str())
            .ok_or_else(|| format!("missing {close}"))?;
        let content = &after[..end];
        if content.contains('<') {
            return Err(format!("element {name} is not a flat leaf"));
        }
        out.push((name.to_string(), RawValue::Text(xml_unescape(content)?)));
        body = &after[end + close.len()..];
    }
}

fn open_tag(text: &str) -> Result<(&str, &str), String> {
    let inner = text.strip_prefix('<').ok_or("expected an element")?;
    let end = inner.find('>').ok_or("unterminated tag")?;
    let name = &inner[..end];
    check_name(name)?;
    Ok((name, &inner[end + 1..]))
}

fn check_name(name: &str) -> Result<(), String> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    if ok {
        Ok(())
    } else {
        Err(format!(
            "unsupported element name {name:?} (attributes and namespaces are not allowed)"
        ))
    }
}

/// Renders a canonical record in `format`. Output is deterministic.
pub fn encode(record: &CanonicalRecord, format: Format) -> Vec<u8> {
    if format == Format::Json {
        return record.to_wire().into_bytes();
    }
    let values: Vec<(Field, String)> = Field::ALL
        .into_iter()
        .map(|f| (f, field_text(record, f)))
        .collect();
    match format {
        Format::Json => unreachable!(),
        Format::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            writer
                .write_record(values.iter().map(|(f, _)| f.name()))
                .and_then(|_| writer.write_record(values.iter().map(|(_, v)| v.as_str())))
                .expect("writing CSV to memory");
            writer.into_inner().expect("flushing CSV to memory")
        }
        Format::Xmllite => {
            let mut out = String::from("<record>\n");
            for (f, v) in &values {
                out.push_str(&format!("  <{0}>{1}</{0}>\n", f.name(), xml_escape(v)));
            }
            out.push_str("</record>\n");
            out.into_bytes()
        }
        Format::Kv => values
            .iter()
            .map(|(f, v)| format!("{}={}\n", f.name(), kv_escape(v)))
            .collect::<String>()
            .into_bytes(),
    }
}

fn field_text(r: &CanonicalRecord, field: Field) -> String {
    match field {
        Field::SensorId => r.sensor_id().to_string(),
        Field::Quantity => r.quantity().to_string(),
        Field::Value => r.value().to_string(),
        Field::Unit => r.unit().to_string(),
        Field::Timestamp => r.timestamp().to_string(),
        Field::Lat => r.location().latitude().to_string(),
        Field::Lon => r.location().longitude().to_string(),
        Field::Description => r.description().to_string(),
        Field::Keywords => r.keywords().join(","),
        Field::Confidence => r.confidence().value().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interop::Stage;

    fn soil_record() -> CanonicalRecord {
        CanonicalRecord::new(RecordFields {
            sensor_id: SensorId::parse("SOIL7AGR").unwrap(),
            quantity: "soil_moisture".into(),
            value: 23.45,
            unit: "%".into(),
            timestamp: 1_700_000_002_000,
            location: GeoLocation::new(31.95, 35.91).unwrap(),
            description: "Soil moisture content".into(),
            keywords: vec!["soil".into(), "moisture".into()],
            confidence: Confidence::CERTAIN,
        })
        .unwrap()
    }

    #[test]
    fn csv_with_aliases_maps_to_canonical_temperature() {
        let o = Ontology::bundled();
        let payload = "id,type,reading,units,ts,latitude,longitude\n\
                       TEMP102SC,temp,36.78,C,1700000000000,31.95,35.91\n";
        let r = decode(payload.as_bytes(), Format::Csv, &o).unwrap();
        assert_eq!(r.quantity(), "temperature");
        assert_eq!(r.unit(), "Celsius");
        assert_eq!(r.value(), 36.78);
        assert_eq!(r.description(), "Ambient temperature");
        assert_eq!(r.confidence(), Confidence::CERTAIN);
    }

    #[test]
    fn csv_unknown_column_is_a_map_error() {
        let o = Ontology::bundled();
        let payload = "sensor_id,frobnitz\nTEMP102SC,1\n";
        let err = decode(payload.as_bytes(), Format::Csv, &o).unwrap_err();
        assert_eq!(err.stage, Stage::Map);
        assert_eq!(err.field, "frobnitz");
        assert_eq!(err.source_format, Format::Csv);
    }

    #[test]
    fn csv_encoding_of_soil_record_carries_value_and_unit() {
        let text = String::from_utf8(encode(&soil_record(), Format::Csv)).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.contains("23.45"), "{row}");
        assert!(row.contains('%'), "{row}");
        assert_eq!(
            encode(&soil_record(), Format::Csv),
            encode(&soil_record(), Format::Csv)
        );
    }

    #[test]
    fn every_format_round_trips_the_soil_record() {
        let o = Ontology::bundled();
        for f in Format::ALL {
            let bytes = encode(&soil_record(), f);
            assert_eq!(decode(&bytes, f, &o).unwrap(), soil_record(), "{f}");
        }
    }

    #[test]
    fn tricky_description_survives_every_format() {
        let o = Ontology::bundled();
        let mut fields = soil_record().into_fields();
        fields.description = r#"a, "quoted" <b>&amp; c=d \n x"#.into();
        let r = CanonicalRecord::new(fields).unwrap();
        for f in Format::ALL {
            assert_eq!(decode(&encode(&r, f), f, &o).unwrap(), r, "{f}");
        }
    }

    #[test]
    fn validate_failure_is_reported_with_source_format() {
        let o = Ontology::bundled();
        let payload =
            "sensor_id=PH1AGR\nquantity=ph\nvalue=19.0\nunit=pH\ntimestamp=5\nlat=0\nlon=0\n";
        let err = decode(payload.as_bytes(), Format::Kv, &o).unwrap_err();
        assert_eq!(err.stage, Stage::Validate);
        assert_eq!(err.field, "value");
        assert_eq!(err.source_format, Format::Kv);
    }

    #[test]
    fn unit_spelling_outside_quantity_is_kept_and_rejected() {
        let o = Ontology::bundled();
        let payload = r#"{"sensor_id":"TEMP102AGR","quantity":"temperature","value":36.78,"unit":"%","timestamp":1,"lat":0,"lon":0}"#;
        let err = decode(payload.as_bytes(), Format::Json, &o).unwrap_err();
        assert_eq!((err.stage, err.field.as_str()), (Stage::Validate, "unit"));
    }

    #[test]
    fn missing_required_field_is_a_map_error() {
        let o = Ontology::bundled();
        let payload = "<record><sensor_id>TEMP1AGR</sensor_id></record>";
        let err = decode(payload.as_bytes(), Format::Xmllite, &o).unwrap_err();
        assert_eq!(err.stage, Stage::Map);
        assert_eq!(err.field, "quantity");
    }

    #[test]
    fn xmllite_rejects_attributes_and_nesting() {
        let o = Ontology::bundled();
        for bad in [
            r#"<record><value unit="C">1</value></record>"#,
            "<record><a><b>1</b></a></record>",
            "<record><value>1</value>",
        ] {
            let err = decode(bad.as_bytes(), Format::Xmllite, &o).unwrap_err();
            assert_eq!(err.stage, Stage::Map, "{bad}");
        }
    }

    #[test]
    fn xmllite_accepts_declaration_and_empty_elements() {
        let o = Ontology::bundled();
        let payload = "<?xml version=\"1.0\"?>\n<reading><id>HUM3AGR</id><type>hum</type>\
            <reading>68.49</reading><units>percent</units><ts>10</ts><lat>1.5</lat>\
            <lon>-2</lon><keywords/></reading>";
        let r = decode(payload.as_bytes(), Format::Xmllite, &o).unwrap();
        assert_eq!(r.quantity(), "humidity");
        assert_eq!(r.unit(), "%");
        assert!(r.keywords().is_empty());
    }

    #[test]
    fn duplicate_fields_are_rejected() {
        let o = Ontology::bundled();
        let payload = "sensor_id=PH1AGR\nid=PH1AGR\n";
        let err = decode(payload.as_bytes(), Format::Kv, &o).unwrap_err();
        assert_eq!(err.field, "sensor_id");
    }

    #[test]
    fn json_rejects_nested_objects() {
        let o = Ontology::bundled();
        let err = decode(br#"{"sensor_id":{"a":1}}"#, Format::Json, &o).unwrap_err();
        assert_eq!(err.stage, Stage::Map);
    }
}
