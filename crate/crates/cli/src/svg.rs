//! Minimal SVG writer for trajectory plots and field heatmaps.

use st_planner::types::Vec2;

pub struct Svg {
    body: String,
    scale: f64,
    height_m: f64,
}

impl Svg {
    /// Canvas over a workspace of `extent` meters at `scale` px/m. The y
    /// axis is flipped so +y points up.
    pub fn new(extent: Vec2, scale: f64) -> Self {
        let (w, h) = (extent.x * scale, extent.y * scale);
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" \
             viewBox=\"0 0 {w:.0} {h:.0}\">\n"
        ));
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\" \
             stroke=\"black\"/>\n"
        ));
        Svg {
            body,
            scale,
            height_m: extent.y,
        }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        (p.x * self.scale, (self.height_m - p.y) * self.scale)
    }

    pub fn comment(&mut self, text: &str) {
        self.body.push_str(&format!("<!-- {text} -->\n"));
    }

    pub fn circle(&mut self, center: Vec2, radius_m: f64, fill: &str, opacity: f64) {
        let (cx, cy) = self.px(center);
        self.body.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"{fill}\" \
             fill-opacity=\"{opacity}\"/>\n",
            radius_m * self.scale
        ));
    }

    pub fn line(&mut self, a: Vec2, b: Vec2, stroke: &str, width: f64) {
        let (x1, y1) = self.px(a);
        let (x2, y2) = self.px(b);
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
             stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n"
        ));
    }

    pub fn polyline(&mut self, points: impl IntoIterator<Item = Vec2>, stroke: &str, width: f64) {
        let pts: Vec<String> = points
            .into_iter()
            .map(|p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n",
            pts.join(" ")
        ));
    }

    /// Axis-aligned cell for heatmaps; `origin` is the lower-left corner.
    pub fn cell(&mut self, origin: Vec2, size_m: f64, fill: &str) {
        let (x, y) = self.px(Vec2::new(origin.x, origin.y + size_m));
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{s:.2}\" height=\"{s:.2}\" fill=\"{fill}\"/>\n",
            s = size_m * self.scale
        ));
    }

    pub fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Blue-to-red ramp for signed distances: violations red, far-away blue.
pub fn distance_color(d: f64) -> String {
    let x = (d.clamp(-0.5, 3.0) + 0.5) / 3.5;
    let r = (255.0 * (1.0 - x)) as u8;
    let b = (255.0 * x) as u8;
    let g = (80.0 + 100.0 * (1.0 - (2.0 * x - 1.0).abs())) as u8;
    format!("rgb({r},{g},{b})")
}
