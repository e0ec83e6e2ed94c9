use super::{BaseDescriptor, DescriptorFamily, Keypoint};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Parsed contents of a descriptor interchange file.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorFile {
    pub dim: usize,
    /// Family named in the header, `None` when the header has no tag.
    pub family: Option<DescriptorFamily>,
    /// `#` lines, without the marker.
    pub comments: Vec<String>,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<BaseDescriptor>,
}

impl DescriptorFile {
    pub fn family_or_external(&self) -> DescriptorFamily {
        self.family
            .clone()
            .unwrap_or_else(|| DescriptorFamily::Other("external".into()))
    }
}

/// Read `DESC <dim> [family]` followed by `x y scale angle v1 .. v<dim>` rows.
pub fn load_external_descriptors(path: &Path) -> Result<(Vec<Keypoint>, Vec<BaseDescriptor>)> {
    let f = read_descriptor_file(path)?;
    Ok((f.keypoints, f.descriptors))
}

pub fn read_descriptor_file(path: &Path) -> Result<DescriptorFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_descriptors(&text, &path.display().to_string())
}

pub fn parse_descriptors(text: &str, name: &str) -> Result<DescriptorFile> {
    let mut header: Option<(usize, Option<DescriptorFamily>)> = None;
    let mut comments = Vec::new();
    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if t.is_empty() {
            continue;
        }
        let Some((dim, family)) = &header else {
            header = Some(parse_header(t, name, lineno)?);
            continue;
        };
        let mut nums = Vec::with_capacity(dim + 4);
        for tok in t.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(name, lineno, format!("row {lineno}: bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(name, lineno, format!("row {lineno}: non-finite value")));
            }
            nums.push(v);
        }
        if nums.len() != dim + 4 {
            return Err(Error::parse(
                name,
                lineno,
                format!(
                    "row {lineno}: expected 4 keypoint fields and {dim} values, found {} values",
                    nums.len().saturating_sub(4)
                ),
            ));
        }
        if !(nums[2] > 0.0) {
            return Err(Error::parse(name, lineno, format!("row {lineno}: scale must be positive")));
        }
        // fused exports carry signed position values
        let fused = comments.iter().any(|c: &String| c.starts_with("fused "));
        if !fused && nums[4..].iter().any(|&v| v < 0.0) {
            return Err(Error::parse(name, lineno, format!("row {lineno}: negative descriptor value")));
        }
        keypoints.push(Keypoint::new(nums[0], nums[1], nums[2], nums[3]));
        descriptors.push(BaseDescriptor {
            values: nums[4..].iter().map(|&v| v as f32).collect(),
            family: family
                .clone()
                .unwrap_or_else(|| DescriptorFamily::Other("external".into())),
        });
    }
    let Some((dim, family)) = header else {
        return Err(Error::parse(name, 1, "missing DESC header"));
    };
    Ok(DescriptorFile {
        dim,
        family,
        comments,
        keypoints,
        descriptors,
    })
}

fn parse_header(t: &str, name: &str, lineno: usize) -> Result<(usize, Option<DescriptorFamily>)> {
    let toks: Vec<&str> = t.split_whitespace().collect();
    if toks.first() != Some(&"DESC") || toks.len() < 2 || toks.len() > 3 {
        return Err(Error::parse(name, lineno, "expected header `DESC <dim> [family]`"));
    }
    let dim: usize = toks[1]
        .parse()
        .map_err(|_| Error::parse(name, lineno, format!("bad dimension {:?}", toks[1])))?;
    if dim == 0 {
        return Err(Error::parse(name, lineno, "dimension must be positive"));
    }
    let family = match toks.get(2) {
        Some(f) => Some(f.parse().map_err(|_| Error::parse(name, lineno, "bad family tag"))?),
        None => None,
    };
    Ok((dim, family))
}

/// Serialize keypoints and descriptors. `family` goes into the header when set.
pub fn format_descriptors(
    keypoints: &[Keypoint],
    descriptors: &[BaseDescriptor],
    family: Option<&DescriptorFamily>,
    comments: &[String],
) -> Result<String> {
    if keypoints.len() != descriptors.len() {
        return Err(Error::invalid("keypoint and descriptor counts differ"));
    }
    let dim = match descriptors.first() {
        Some(d) => d.dim(),
        None => 0,
    };
    if descriptors.iter().any(|d| d.dim() != dim) {
        return Err(Error::invalid("descriptors have mixed dimensions"));
    }
    let dim = if descriptors.is_empty() { super::BUILTIN_DIM } else { dim };
    let mut out = String::new();
    match family {
        Some(f) => writeln!(out, "DESC {dim} {f}").unwrap(),
        None => writeln!(out, "DESC {dim}").unwrap(),
    }
    for c in comments {
        writeln!(out, "# {c}").unwrap();
    }
    for (k, d) in keypoints.iter().zip(descriptors) {
        write!(out, "{} {} {} {}", k.x, k.y, k.scale, k.angle).unwrap();
        for v in &d.values {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_descriptors(
    path: &Path,
    keypoints: &[Keypoint],
    descriptors: &[BaseDescriptor],
    family: Option<&DescriptorFamily>,
    comments: &[String],
) -> Result<()> {
    let s = format_descriptors(keypoints, descriptors, family, comments)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> String {
        let mut s = String::from("10.5 20 2.5 0.25");
        for i in 0..n {
            s.push_str(&format!(" {}", i % 7));
        }
        s
    }

    #[test]
    fn two_rows() {
        let text = format!("DESC 128\n{}\n{}\n", row(128), row(128));
        let f = parse_descriptors(&text, "t").unwrap();
        assert_eq!(f.keypoints.len(), 2);
        assert_eq!(f.descriptors[1].dim(), 128);
        assert_eq!(f.keypoints[0].view_id, 0);
        assert_eq!(f.family, None);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(parse_descriptors("", "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn short_row_names_line() {
        let text = format!("DESC 128\n{}\n{}\n", row(128), row(127));
        match parse_descriptors(&text, "t") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("row 3"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn family_and_comments_roundtrip() {
        let kps = vec![Keypoint::new(1.25, 2.5, 3.0, 0.125)];
        let ds = vec![BaseDescriptor {
            values: (0..32).map(|i| i as f32).collect(),
            family: DescriptorFamily::Orb,
        }];
        let s = format_descriptors(&kps, &ds, Some(&DescriptorFamily::Orb), &["hello".into()])
            .unwrap();
        let f = parse_descriptors(&s, "t").unwrap();
        assert_eq!(f.family, Some(DescriptorFamily::Orb));
        assert_eq!(f.comments, vec!["hello".to_string()]);
        assert_eq!(f.keypoints, kps);
        assert_eq!(f.descriptors, ds);
    }

    #[test]
    fn bad_header() {
        assert!(parse_descriptors("DESK 3\n", "t").is_err());
        assert!(parse_descriptors("DESC 0\n", "t").is_err());
        assert!(parse_descriptors("DESC x\n", "t").is_err());
    }
}
