"""Error-bounded lossy compression with online codec selection."""
