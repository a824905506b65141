// placeholder; bindings are added once the core API is final
