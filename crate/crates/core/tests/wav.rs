use std::path::Path;

use tfsep::signal::{read_wav, write_wav, Waveform, SAMPLE_RATE};
use tfsep::Error;

fn write_pcm16(path: &Path, samples: &[i16], rate: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn pcm16_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    write_pcm16(&p, &[32767, -32768, 0, 16384], SAMPLE_RATE);
    let w = read_wav(&p).unwrap();
    assert_eq!(w.samples(), &[32767.0 / 32768.0, -1.0, 0.0, 0.5]);
    assert_eq!(w.sample_rate(), SAMPLE_RATE);
}

#[test]
fn empty_and_single_sample_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.wav");
    write_pcm16(&p, &[], SAMPLE_RATE);
    assert!(read_wav(&p).unwrap().is_empty());
    let p = dir.path().join("one.wav");
    write_pcm16(&p, &[-1], SAMPLE_RATE);
    assert_eq!(read_wav(&p).unwrap().samples(), &[-1.0 / 32768.0]);
}

#[test]
fn float_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.wav");
    let samples: Vec<f64> = (0..1000).map(|i| ((i as f32 * 0.37).sin() * 0.9) as f64).collect();
    let w = Waveform::new(samples, SAMPLE_RATE).unwrap();
    write_wav(&w, &p).unwrap();
    let back = read_wav(&p).unwrap();
    assert!(back
        .samples()
        .iter()
        .zip(w.samples())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn stereo_reads_first_channel() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("st.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for s in [100i16, -5, 200, -5, 300, -5] {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
    let back = read_wav(&p).unwrap();
    assert_eq!(back.samples(), &[100.0 / 32768.0, 200.0 / 32768.0, 300.0 / 32768.0]);
}

#[test]
fn truncated_body_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.wav");
    write_pcm16(&p, &[1, 2, 3, 4, 5, 6, 7, 8], SAMPLE_RATE);
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
    let err = read_wav(&p).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
    assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(Error::Io(_))));
}

#[test]
fn unsupported_inputs_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rate.wav");
    write_pcm16(&p, &[0; 4], 8000);
    assert!(matches!(read_wav(&p), Err(Error::Format(_))));

    let p = dir.path().join("24.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 24,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    w.write_sample(5i32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(read_wav(&p), Err(Error::Format(_))));

    let p = dir.path().join("junk.wav");
    std::fs::write(&p, b"definitely not a RIFF file").unwrap();
    assert!(matches!(read_wav(&p), Err(Error::Format(_))));
}
