use lens_core::streams::{
    evaluate, predict_video, AugmentConfig, FlowFrontEnd, ModelShape, ParamGroup, SpatialSource,
    StreamKind, StreamModel, TemporalSource,
};
use lens_core::{ActionLabel, Clip, Frame};

const SIZE: usize = 64;
const FRAMES: usize = 15;

/// A bright disc crossing a dark textured scene left to right.
fn moving_disc() -> Clip {
    let frames = (0..FRAMES)
        .map(|t| {
            let cx = 14.0 + 2.0 * t as f32;
            let mut px = Vec::with_capacity(SIZE * SIZE * 3);
            for y in 0..SIZE {
                for x in 0..SIZE {
                    let (dx, dy) = (x as f32 - cx, y as f32 - 32.0);
                    let bg = 12.0 + 3.0 * ((x as f32 * 0.4).sin() + (y as f32 * 0.3).cos());
                    let v = if dx * dx + dy * dy < 36.0 { 140.0 } else { bg };
                    px.extend([v as u8, (v * 0.8) as u8, (v * 0.6) as u8]);
                }
            }
            Frame::at(SIZE, SIZE, px, t as u32, 30).unwrap()
        })
        .collect();
    Clip::new(frames, 30)
        .unwrap()
        .with_label(ActionLabel::Theft)
}

fn reversed(clip: &Clip) -> Clip {
    let frames = clip
        .frames
        .iter()
        .rev()
        .enumerate()
        .map(|(i, f)| Frame::at(f.width, f.height, f.pixels.clone(), i as u32, 30).unwrap())
        .collect();
    Clip::new(frames, 30)
        .unwrap()
        .with_label(ActionLabel::Theft)
}

/// Responds to the sign of horizontal motion: rightward votes class 0,
/// leftward class 1.
fn direction_model() -> StreamModel {
    let shape = ModelShape::temporal(10);
    let mut m = StreamModel::zeros(StreamKind::Temporal, shape).unwrap();
    let (c, k) = (shape.input_channels, shape.kernel);
    let centre = (k / 2) * k + k / 2;
    let w = m.group_mut(ParamGroup::ConvWeight);
    for ch in (0..c).step_by(2) {
        w[ch * k * k + centre] = 1.0;
        w[(c + ch) * k * k + centre] = -1.0;
    }
    let fc1 = m.group_mut(ParamGroup::Fc1Weight);
    fc1[0] = 20.0;
    fc1[1] = -20.0;
    let fc2 = m.group_mut(ParamGroup::Fc2Weight);
    fc2[0] = 5.0;
    fc2[shape.hidden] = -5.0;
    m
}

#[test]
fn mirrored_motion_flips_temporal_but_not_spatial() {
    let forward = moving_disc();
    let backward = reversed(&forward);
    let clips = [forward, backward];

    let spatial = StreamModel::init(StreamKind::Spatial, ModelShape::spatial(), 3).unwrap();
    let src = SpatialSource::new(&clips, AugmentConfig::default());
    let (_, sp) = evaluate(&spatial, &src).unwrap();
    assert_eq!(sp[0].argmax(), sp[1].argmax());

    let fe = FlowFrontEnd::default();
    let flows: Vec<_> = clips.iter().map(|c| fe.clip_flows(c).unwrap()).collect();
    let temporal = direction_model();
    let tsrc = TemporalSource {
        clips: &flows,
        stack_len: 10,
    };
    let a = predict_video(&temporal, &tsrc, 0).unwrap();
    let b = predict_video(&temporal, &tsrc, 1).unwrap();
    assert_eq!(a.argmax(), ActionLabel::Theft, "{a:?}");
    assert_eq!(b.argmax(), ActionLabel::Assault, "{b:?}");
}
