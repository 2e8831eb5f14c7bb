//! Binary image morphology: connected components, hole filling, dilation,
//! erosion, and image moments. All functions operate on row-major boolean
//! buffers with explicit geometry.

/// Connectivity for component labeling and hole detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Label connected foreground components. Returns (labels, count) where
/// labels are 1-based and 0 marks background.
pub fn label_components(
    mask: &[bool],
    height: usize,
    width: usize,
    conn: Connectivity,
) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (y, x) = ((idx / width) as i64, (idx % width) as i64);
            for &(dy, dx) in conn.offsets() {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= height as i64 || nx >= width as i64 {
                    continue;
                }
                let nidx = ny as usize * width + nx as usize;
                if mask[nidx] && labels[nidx] == 0 {
                    labels[nidx] = next;
                    stack.push(nidx);
                }
            }
        }
    }
    (labels, next as usize)
}

/// Remove 8-connected components with fewer than `min_area` pixels.
pub fn remove_small_components(
    mask: &[bool],
    height: usize,
    width: usize,
    min_area: usize,
) -> Vec<bool> {
    let (labels, count) = label_components(mask, height, width, Connectivity::Eight);
    let mut areas = vec![0usize; count + 1];
    for &l in &labels {
        areas[l as usize] += 1;
    }
    labels
        .iter()
        .map(|&l| l != 0 && areas[l as usize] >= min_area)
        .collect()
}

/// Keep only the largest 8-connected component (empty input stays empty).
pub fn largest_component(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let (labels, count) = label_components(mask, height, width, Connectivity::Eight);
    if count == 0 {
        return vec![false; mask.len()];
    }
    let mut areas = vec![0usize; count + 1];
    for &l in &labels {
        areas[l as usize] += 1;
    }
    let best = (1..=count).max_by_key(|&l| areas[l]).unwrap() as u32;
    labels.iter().map(|&l| l == best).collect()
}

/// Fill holes: background regions (4-connected) not touching the image
/// border become foreground.
pub fn fill_holes(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    let inverted: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let (labels, count) = label_components(&inverted, height, width, Connectivity::Four);
    let mut touches_border = vec![false; count + 1];
    for x in 0..width {
        touches_border[labels[x] as usize] = true;
        touches_border[labels[(height - 1) * width + x] as usize] = true;
    }
    for y in 0..height {
        touches_border[labels[y * width] as usize] = true;
        touches_border[labels[y * width + width - 1] as usize] = true;
    }
    mask.iter()
        .zip(labels.iter())
        .map(|(&m, &l)| m || (l != 0 && !touches_border[l as usize]))
        .collect()
}

/// Structuring element: disk of the given radius, including the diagonal
/// neighbors at radius 1 (squared distance threshold (r + 1/2)^2).
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let limit = (radius as f64 + 0.5).powi(2);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dy * dy + dx * dx) as f64 <= limit {
                out.push((dy, dx));
            }
        }
    }
    out
}

pub fn dilate(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    apply_se(mask, height, width, radius, true)
}

pub fn erode(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    apply_se(mask, height, width, radius, false)
}

/// Morphological opening (erode then dilate).
pub fn open(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    dilate(&erode(mask, height, width, radius), height, width, radius)
}

/// Morphological closing (dilate then erode).
pub fn close(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    erode(&dilate(mask, height, width, radius), height, width, radius)
}

fn apply_se(mask: &[bool], height: usize, width: usize, radius: usize, dilate: bool) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let se = disk_offsets(radius);
    let mut out = vec![!dilate; mask.len()];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let mut hit = !dilate;
            for &(dy, dx) in &se {
                let (ny, nx) = (y + dy, x + dx);
                // Outside the frame counts as background.
                let v = if ny < 0 || nx < 0 || ny >= height as i64 || nx >= width as i64 {
                    false
                } else {
                    mask[ny as usize * width + nx as usize]
                };
                if dilate {
                    if v {
                        hit = true;
                        break;
                    }
                } else if !v {
                    hit = false;
                    break;
                }
            }
            out[y as usize * width + x as usize] = hit;
        }
    }
    out
}

/// Centroid and central second-order moments (mu20, mu02, mu11) of a binary
/// image, in pixel coordinates (x = column, y = row).
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub area: f64,
    pub cx: f64,
    pub cy: f64,
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
}

pub fn moments(mask: &[bool], height: usize, width: usize) -> Option<Moments> {
    let mut area = 0.0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                area += 1.0;
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    if area == 0.0 {
        return None;
    }
    let (cx, cy) = (sx / area, sy / area);
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                mu20 += dx * dx;
                mu02 += dy * dy;
                mu11 += dx * dy;
            }
        }
    }
    Some(Moments {
        area,
        cx,
        cy,
        mu20: mu20 / area,
        mu02: mu02 / area,
        mu11: mu11 / area,
    })
}

/// Rasterize a filled ellipse given center, semi-axes, and orientation
/// (radians, angle of the major axis against the x axis).
pub fn rasterize_ellipse(
    height: usize,
    width: usize,
    cx: f64,
    cy: f64,
    semi_a: f64,
    semi_b: f64,
    theta: f64,
) -> Vec<bool> {
    let (ct, st) = (theta.cos(), theta.sin());
    let mut out = vec![false; height * width];
    if semi_a <= 0.0 || semi_b <= 0.0 {
        return out;
    }
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let u = dx * ct + dy * st;
            let v = -dx * st + dy * ct;
            if (u / semi_a).powi(2) + (v / semi_b).powi(2) <= 1.0 {
                out[y * width + x] = true;
            }
        }
    }
    out
}
