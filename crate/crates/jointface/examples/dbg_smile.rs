// debug: dump ring-corner region of a failing square face
use jointface::data::*;
fn main() {
    let cfg = GenConfig { occlusion: 0.0, ..GenConfig::default() };
    let rec = generate_scene(652, &cfg).unwrap();
    let img = rec.image.to_vec();
    let w = 64usize;
    for f in &rec.faces {
        if (f.bbox.x1 - 16.1).abs() > 0.5 { continue; }
        let eye_l = f.landmarks[0]; let eye_r = f.landmarks[1];
        let r = (eye_r.0 - eye_l.0) / 1.10;
        let cx = (eye_l.0 + eye_r.0) / 2.0;
        let cy = eye_l.1 + 0.50 * r;
        println!("attrs {:?} cx {cx:.2} cy {cy:.2} r {r:.2}", f.attributes);
        println!("corner probes at ({:.2},{:.2}) and ({:.2},{:.2}) rad {:.2}",
            cx-0.80*r, cy-0.025*r+0.58*r, cx+0.80*r, cy-0.025*r+0.58*r, (0.05*r).max(0.9));
        println!("box {:?}", f.bbox);
        let y0 = (cy + 0.40*r) as usize; let y1 = ((cy + 0.70*r) as usize + 2).min(64);
        let x0 = (cx - 0.95*r).max(0.0) as usize; let x1 = ((cx + 0.95*r) as usize + 2).min(64);
        for iy in y0..y1 {
            let mut row = format!("y={iy:2} ");
            for ix in x0..x1 {
                let v = img[iy*w+ix];
                row.push(if v > 0.6 {'#'} else if v > 0.3 {'+'} else {'.'});
            }
            println!("{row}");
        }
    }
}
